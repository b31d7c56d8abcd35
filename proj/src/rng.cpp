#include "cqdyn/rng.hpp"

#include <cmath>
#include <numbers>

namespace cqdyn {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

// Counter word 1 selects the purpose of a block so the normal and uniform
// sub-streams never share counters.
constexpr std::uint32_t kLaneNormal = 0x0u;
constexpr std::uint32_t kLaneUniform = 0x80000000u;

inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  // 53 random bits, shifted by half an ulp so 0 and 1 are never produced.
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  const std::uint64_t k = mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ull));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

double NoiseStream::normal(std::uint64_t step, std::uint32_t component) const {
  // One Philox block gives two uniforms, hence one Box-Muller pair per two
  // components. The retry counter lives in the top bits of word 1.
  const std::uint32_t pair = component / 2;
  for (std::uint32_t retry = 0;; ++retry) {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(step), kLaneNormal | (retry << 24) | pair,
                                  static_cast<std::uint32_t>(step >> 32), 0u};
    const auto out = Philox4x32::block(ctr, key_);
    const double u1 = to_unit_open(out[0], out[1]);
    const double u2 = to_unit_open(out[2], out[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    const double z = (component % 2 == 0) ? r * std::cos(angle) : r * std::sin(angle);
    if (std::abs(z) < 8.0) return z;
  }
}

double NoiseStream::uniform(std::uint64_t index, std::uint32_t lane) const {
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(index), kLaneUniform | (lane & 0x7FFFFFFFu),
                                static_cast<std::uint32_t>(index >> 32), 1u};
  const auto out = Philox4x32::block(ctr, key_);
  return to_unit_open(out[0], out[1]);
}

}  // namespace cqdyn
