#pragma once

#include <array>
#include <cstdint>

namespace cqdyn {

/// Philox4x32-10 block cipher (Salmon et al., SC'11). Stateless: the output is
/// a pure function of (counter, key), which is what makes trajectories
/// reproducible and independent of scheduling.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter counter, Key key);
};

/// Gaussian noise addressed by (stream, step, component). One stream per
/// trajectory; the stream id is mixed into the Philox key together with the
/// user seed.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t stream = 0);

  /// Standard normal variate for (step, component), |value| < 8.
  double normal(std::uint64_t step, std::uint32_t component) const;

  /// Uniform variate in (0, 1) on an independent sub-stream (used for
  /// sampling initial conditions and bootstrap indices).
  double uniform(std::uint64_t index, std::uint32_t lane = 0) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  Philox4x32::Key key_;
};

/// splitmix64 finaliser; used to derive keys and child seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace cqdyn
