#include "cqdyn/ensemble.hpp"

#include "cqdyn/errors.hpp"
#include "cqdyn/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace cqdyn {

// ---------------------------------------------------------------------------
// PhaseGrid

PhaseGrid PhaseGrid::make(std::vector<double> lo, std::vector<double> hi, std::vector<int> cells,
                          std::vector<int> axes) {
  const std::size_t k = cells.size();
  if (k == 0 || lo.size() != k || hi.size() != k) throw UsageError("grid: lo, hi and cells must have equal length");
  if (axes.empty()) {
    axes.resize(k);
    std::iota(axes.begin(), axes.end(), 0);
  }
  if (axes.size() != k) throw UsageError("grid: axes must have one entry per grid dimension");
  for (std::size_t i = 0; i < k; ++i) {
    if (cells[i] < 2) throw UsageError("grid: at least 2 cells per dimension");
    if (!(std::isfinite(lo[i]) && std::isfinite(hi[i]) && hi[i] > lo[i])) {
      throw UsageError("grid: bounds must be finite with hi > lo");
    }
    if (axes[i] < 0) throw UsageError("grid: negative axis index");
  }
  return PhaseGrid{std::move(axes), std::move(lo), std::move(hi), std::move(cells)};
}

std::size_t PhaseGrid::size() const {
  std::size_t s = 1;
  for (int c : cells) s *= static_cast<std::size_t>(c);
  return s;
}

double PhaseGrid::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < dims(); ++k) v *= width(k);
  return v;
}

std::size_t PhaseGrid::flat(const std::vector<int>& idx) const {
  std::size_t f = 0;
  for (int k = dims() - 1; k >= 0; --k) f = f * static_cast<std::size_t>(cells[k]) + static_cast<std::size_t>(idx[k]);
  return f;
}

std::vector<int> PhaseGrid::unflat(std::size_t f) const {
  std::vector<int> idx(cells.size());
  for (int k = 0; k < dims(); ++k) {
    idx[k] = static_cast<int>(f % static_cast<std::size_t>(cells[k]));
    f /= static_cast<std::size_t>(cells[k]);
  }
  return idx;
}

std::optional<std::size_t> PhaseGrid::locate(const PhaseVector& z) const {
  std::vector<int> idx(cells.size());
  for (int k = 0; k < dims(); ++k) {
    if (axes[k] >= z.size()) throw DimensionError("grid axis beyond the phase-space dimension");
    const double x = z(axes[k]);
    if (!(x >= lo[k] && x < hi[k])) return std::nullopt;
    idx[k] = std::min(cells[k] - 1, static_cast<int>(std::floor((x - lo[k]) / width(k))));
  }
  return flat(idx);
}

RealVector PhaseGrid::center(std::size_t f) const {
  const auto idx = unflat(f);
  RealVector c(dims());
  for (int k = 0; k < dims(); ++k) c(k) = lo[k] + (idx[k] + 0.5) * width(k);
  return c;
}

// ---------------------------------------------------------------------------
// Hermitian basis

std::vector<ComplexMatrix> hermitian_basis(int d) {
  if (d < 1) throw DimensionError("hermitian_basis: d must be positive");
  std::vector<ComplexMatrix> basis;
  basis.reserve(static_cast<std::size_t>(d) * d);
  basis.push_back(ComplexMatrix::Identity(d, d) / std::sqrt(static_cast<double>(d)));
  const double r2 = 1.0 / std::sqrt(2.0);
  // Off-diagonal symmetric / antisymmetric pairs, then traceless diagonals.
  // For d = 2 this reproduces the order (x, y, z).
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      ComplexMatrix sx = ComplexMatrix::Zero(d, d);
      sx(j, k) = r2;
      sx(k, j) = r2;
      ComplexMatrix sy = ComplexMatrix::Zero(d, d);
      sy(j, k) = Complex(0.0, -r2);
      sy(k, j) = Complex(0.0, r2);
      basis.push_back(std::move(sx));
      basis.push_back(std::move(sy));
    }
  }
  for (int l = 1; l < d; ++l) {
    ComplexMatrix h = ComplexMatrix::Zero(d, d);
    const double norm = 1.0 / std::sqrt(static_cast<double>(l) * (l + 1));
    for (int j = 0; j < l; ++j) h(j, j) = norm;
    h(l, l) = -l * norm;
    basis.push_back(std::move(h));
  }
  return basis;
}

RealVector hermitian_components(const std::vector<ComplexMatrix>& basis, const ComplexMatrix& x) {
  RealVector out(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t a = 0; a < basis.size(); ++a) {
    out(static_cast<Eigen::Index>(a)) = basis[a].transpose().cwiseProduct(x).sum().real();
  }
  return out;
}

// ---------------------------------------------------------------------------
// CQGridState

CQGridState CQGridState::zeros(const PhaseGrid& grid, int d) {
  CQGridState s;
  s.grid = grid;
  s.d = d;
  s.values.assign(grid.size(), ComplexMatrix::Zero(d, d));
  return s;
}

double CQGridState::total_trace() const {
  double sum = 0.0;
  for (const auto& v : values) sum += v.trace().real();
  return sum * grid.cell_volume();
}

ComplexMatrix CQGridState::integrated() const {
  ComplexMatrix sum = ComplexMatrix::Zero(d, d);
  for (const auto& v : values) sum += v;
  return sum * grid.cell_volume();
}

RealVector CQGridState::marginal() const {
  RealVector m(static_cast<Eigen::Index>(values.size()));
  for (std::size_t c = 0; c < values.size(); ++c) m(static_cast<Eigen::Index>(c)) = values[c].trace().real();
  return m;
}

RealVector CQGridState::component(int a) const {
  const auto basis = hermitian_basis(d);
  if (a < 0 || a >= static_cast<int>(basis.size())) throw UsageError("component index out of range");
  RealVector out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t c = 0; c < values.size(); ++c) {
    out(static_cast<Eigen::Index>(c)) = basis[a].transpose().cwiseProduct(values[c]).sum().real();
  }
  return out;
}

double CQGridState::moment(const std::function<double(const RealVector&)>& f) const {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    const double w = values[c].trace().real();
    num += w * f(grid.center(c));
    den += w;
  }
  return den != 0.0 ? num / den : 0.0;
}

double CQGridState::boundary_mass() const {
  double mass = 0.0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    const auto idx = grid.unflat(c);
    bool edge = false;
    for (int k = 0; k < grid.dims(); ++k) edge = edge || idx[k] == 0 || idx[k] == grid.cells[k] - 1;
    if (edge) mass += std::abs(values[c].trace().real());
  }
  return mass * grid.cell_volume();
}

// ---------------------------------------------------------------------------
// Initial distributions

namespace {

std::optional<StateVector> pure_vector(const DensityMatrix& rho) {
  const DensityMatrix r = rho / rho.trace().real();
  if (std::abs((r * r).trace().real() - 1.0) > 1e-9) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(numlin::hermitize(r));
  return StateVector(es.eigenvectors().col(r.rows() - 1));
}

}  // namespace

InitialDistribution InitialDistribution::point(const InitialState& s) {
  InitialDistribution out;
  Atom a;
  a.weight = 1.0;
  a.z = s.z;
  a.half_width = PhaseVector::Zero(s.z.size());
  a.rho = s.rho;
  a.psi = s.psi;
  out.atoms.push_back(std::move(a));
  return out;
}

InitialDistribution InitialDistribution::from_grid(const CQGridState& g, int n, const PhaseVector& anchor) {
  if (anchor.size() != 0 && anchor.size() != n) throw DimensionError("from_grid: anchor must have n components");
  InitialDistribution out;
  const double vol = g.grid.cell_volume();
  for (std::size_t c = 0; c < g.values.size(); ++c) {
    const double w = g.values[c].trace().real() * vol;
    if (w <= 0.0) continue;
    Atom a;
    a.weight = w;
    a.z = anchor.size() == n ? anchor : PhaseVector::Zero(n);
    a.half_width = PhaseVector::Zero(n);
    const RealVector center = g.grid.center(c);
    for (int k = 0; k < g.grid.dims(); ++k) {
      const int axis = g.grid.axes[k];
      if (axis >= n) throw DimensionError("from_grid: grid axis beyond n");
      a.z(axis) = center(k);
      a.half_width(axis) = 0.5 * g.grid.width(k);
    }
    a.rho = numlin::hermitize(g.values[c]) / g.values[c].trace().real();
    a.psi = pure_vector(a.rho);
    out.atoms.push_back(std::move(a));
  }
  if (out.atoms.empty()) throw UsageError("from_grid: grid state has no positive mass");
  return out;
}

InitialDistribution InitialDistribution::mixture(double p, const InitialDistribution& a,
                                                 const InitialDistribution& b) {
  if (!(p >= 0.0 && p <= 1.0)) throw UsageError("mixture weight must lie in [0, 1]");
  // Atoms at the same classical location merge: the CQ state there is the
  // weighted sum of the two quantum states, not a coin flip between them.
  InitialDistribution out;
  auto add = [&](Atom atom, double scale) {
    atom.weight *= scale;
    if (atom.weight <= 0.0) return;
    for (auto& e : out.atoms) {
      if (e.z.size() == atom.z.size() && e.z == atom.z && e.half_width == atom.half_width) {
        const double w = e.weight + atom.weight;
        e.rho = (e.weight * e.rho + atom.weight * atom.rho) / w;
        e.weight = w;
        e.psi = pure_vector(e.rho);
        return;
      }
    }
    out.atoms.push_back(std::move(atom));
  };
  for (const auto& atom : a.atoms) add(atom, p);
  for (const auto& atom : b.atoms) add(atom, 1.0 - p);
  return out;
}

InitialState InitialDistribution::sample(std::uint64_t seed, std::uint64_t index) const {
  if (atoms.empty()) throw UsageError("empty initial distribution");
  const NoiseStream noise(seed, index);
  std::size_t pick = 0;
  if (atoms.size() > 1) {
    double total = 0.0;
    for (const auto& a : atoms) total += a.weight;
    const double u = noise.uniform(0, 0) * total;
    double acc = 0.0;
    pick = atoms.size() - 1;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      acc += atoms[i].weight;
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  const Atom& a = atoms[pick];
  InitialState s;
  s.z = a.z;
  for (Eigen::Index i = 0; i < s.z.size(); ++i) {
    if (a.half_width(i) > 0.0) {
      s.z(i) += a.half_width(i) * (2.0 * noise.uniform(0, static_cast<std::uint32_t>(1 + i)) - 1.0);
    }
  }
  s.rho = a.rho;
  s.psi = a.psi;
  return s;
}

CQGridState InitialDistribution::to_grid(const PhaseGrid& grid) const {
  if (atoms.empty()) throw UsageError("empty initial distribution");
  const int d = static_cast<int>(atoms.front().rho.rows());
  CQGridState g = CQGridState::zeros(grid, d);
  const double vol = grid.cell_volume();
  for (const auto& a : atoms) {
    // Per-dimension overlap fractions of the atom box with each cell.
    std::vector<std::vector<std::pair<int, double>>> overlaps(static_cast<std::size_t>(grid.dims()));
    for (int k = 0; k < grid.dims(); ++k) {
      const int axis = grid.axes[k];
      const double c = a.z(axis);
      const double h = a.half_width(axis);
      const double w = grid.width(k);
      if (h <= 0.0) {
        if (c >= grid.lo[k] && c < grid.hi[k]) {
          overlaps[k].push_back({std::min(grid.cells[k] - 1, static_cast<int>(std::floor((c - grid.lo[k]) / w))), 1.0});
        }
        continue;
      }
      for (int i = 0; i < grid.cells[k]; ++i) {
        const double l = grid.lo[k] + i * w;
        const double ov = std::min(l + w, c + h) - std::max(l, c - h);
        if (ov > 0.0) overlaps[k].push_back({i, ov / (2.0 * h)});
      }
    }
    // Cartesian product over dimensions.
    std::vector<std::size_t> pos(overlaps.size(), 0);
    bool empty = false;
    for (const auto& o : overlaps) empty = empty || o.empty();
    if (empty) continue;
    while (true) {
      std::vector<int> idx(overlaps.size());
      double frac = 1.0;
      for (std::size_t k = 0; k < overlaps.size(); ++k) {
        idx[k] = overlaps[k][pos[k]].first;
        frac *= overlaps[k][pos[k]].second;
      }
      g.values[grid.flat(idx)] += (a.weight * frac / vol) * a.rho;
      std::size_t k = 0;
      while (k < pos.size() && ++pos[k] == overlaps[k].size()) pos[k++] = 0;
      if (k == pos.size()) break;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Ensembles

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) break;
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

template <class Model>
std::vector<Trajectory> run_any(const Model& model, const InitialDistribution& init, const EnsembleOptions& opts) {
  if (opts.N == 0) throw UsageError("ensemble size N must be positive");
  std::vector<Trajectory> out(opts.N);
  parallel_for(opts.N, opts.workers, [&](std::size_t i) {
    SimulationOptions sim = opts.sim;
    sim.stream = i;
    out[i] = simulate(model, init.sample(opts.sim.seed, i), sim);
  });
  return out;
}

}  // namespace

std::vector<Trajectory> run_ensemble(const CQModel& model, const InitialDistribution& init,
                                     const EnsembleOptions& opts) {
  return run_any(model, init, opts);
}

std::vector<Trajectory> run_ensemble(const StandardSCModel& model, const InitialDistribution& init,
                                     const EnsembleOptions& opts) {
  return run_any(model, init, opts);
}

// ---------------------------------------------------------------------------
// Histogram estimation and comparison

namespace {

// One trajectory reduced to (cell or -1, Hermitian components of rho).
struct Sample {
  std::ptrdiff_t cell = -1;
  RealVector comps;
};

std::vector<Sample> reduce(const std::vector<Trajectory>& trajectories, double t, const PhaseGrid& grid,
                           const std::vector<ComplexMatrix>& basis) {
  std::vector<Sample> out(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    if (tr.size() == 0) throw UsageError("empty trajectory in ensemble");
    const std::size_t k = tr.index_at(t);
    if (std::abs(tr.t[k] - t) > 0.5 * tr.dt) {
      if (tr.terminated && tr.t[k] < t) continue;  // stopped before t: leakage
      throw UsageError("trajectory not sampled at t = " + std::to_string(t) + " (check the sample stride)");
    }
    if (auto cell = grid.locate(tr.z[k])) {
      out[i].cell = static_cast<std::ptrdiff_t>(*cell);
      out[i].comps = hermitian_components(basis, tr.density(k));
    }
  }
  return out;
}

// Flat histogram: cells x components, each entry already divided by N * vol.
RealMatrix histogram(const std::vector<Sample>& samples, const std::vector<std::size_t>* picks, std::size_t cells,
                     int comps, double vol) {
  RealMatrix h = RealMatrix::Zero(comps, static_cast<Eigen::Index>(cells));
  const std::size_t n = picks ? picks->size() : samples.size();
  for (std::size_t j = 0; j < n; ++j) {
    const Sample& s = samples[picks ? (*picks)[j] : j];
    if (s.cell >= 0) h.col(s.cell) += s.comps;
  }
  return h / (static_cast<double>(n) * vol);
}

// L1 of each row (component) times cell volume. Row 0 scaled to Tr is the marginal.
RealVector l1_rows(const RealMatrix& a, double vol) { return a.cwiseAbs().rowwise().sum() * vol; }

struct WeightedSet {
  std::vector<std::vector<Sample>> parts;
  std::vector<double> weights;
};

RealMatrix weighted_histogram(const WeightedSet& set, std::size_t cells, int comps, double vol) {
  RealMatrix h = RealMatrix::Zero(comps, static_cast<Eigen::Index>(cells));
  for (std::size_t k = 0; k < set.parts.size(); ++k) {
    h += set.weights[k] * histogram(set.parts[k], nullptr, cells, comps, vol);
  }
  return h;
}

// RMS over resamples of the per-component L1 distance between a resampled
// histogram and the full-sample one.
RealVector bootstrap_floor(const WeightedSet& set, std::size_t cells, int comps, double vol, int resamples,
                           std::uint64_t seed) {
  const RealMatrix full = weighted_histogram(set, cells, comps, vol);
  RealVector acc = RealVector::Zero(comps);
  for (int r = 0; r < resamples; ++r) {
    RealMatrix h = RealMatrix::Zero(comps, static_cast<Eigen::Index>(cells));
    for (std::size_t k = 0; k < set.parts.size(); ++k) {
      const auto& part = set.parts[k];
      const NoiseStream noise(seed, mix64(static_cast<std::uint64_t>(r) * 131 + k));
      std::vector<std::size_t> picks(part.size());
      for (std::size_t j = 0; j < part.size(); ++j) {
        picks[j] = std::min(part.size() - 1, static_cast<std::size_t>(noise.uniform(j) * part.size()));
      }
      h += set.weights[k] * histogram(part, &picks, cells, comps, vol);
    }
    acc += l1_rows(h - full, vol).cwiseAbs2();
  }
  return (acc / std::max(1, resamples)).cwiseSqrt();
}

// Scale for turning component 0 (coefficient of I/sqrt(d)) into Tr.
double trace_scale(int d) { return std::sqrt(static_cast<double>(d)); }

ComparisonReport make_report(const RealVector& dist, const RealVector& err, int d, int resamples) {
  ComparisonReport r;
  r.resamples = resamples;
  r.marginal_l1 = dist(0) * trace_scale(d);
  r.marginal_error = err(0) * trace_scale(d);
  for (Eigen::Index a = 0; a < dist.size(); ++a) {
    r.component_l1.push_back(dist(a));
    r.component_error.push_back(err(a));
  }
  return r;
}

RealMatrix grid_components(const CQGridState& g, const std::vector<ComplexMatrix>& basis) {
  RealMatrix h(static_cast<Eigen::Index>(basis.size()), static_cast<Eigen::Index>(g.values.size()));
  for (std::size_t c = 0; c < g.values.size(); ++c) h.col(static_cast<Eigen::Index>(c)) = hermitian_components(basis, g.values[c]);
  return h;
}

}  // namespace

CQGridState estimate_cq_state(const std::vector<Trajectory>& trajectories, double t, const PhaseGrid& grid) {
  if (trajectories.empty()) throw UsageError("estimate_cq_state: empty trajectory list");
  int d = 0;
  for (const auto& tr : trajectories) {
    if (tr.size() > 0) {
      d = static_cast<int>(tr.is_pure() ? tr.psi.front().size() : tr.rho.front().rows());
      break;
    }
  }
  CQGridState g = CQGridState::zeros(grid, d);
  const double scale = 1.0 / (static_cast<double>(trajectories.size()) * grid.cell_volume());
  std::size_t outside = 0;
  for (const auto& tr : trajectories) {
    const std::size_t k = tr.index_at(t);
    if (std::abs(tr.t[k] - t) > 0.5 * tr.dt) {
      if (tr.terminated && tr.t[k] < t) {
        ++outside;
        continue;
      }
      throw UsageError("trajectory not sampled at t = " + std::to_string(t) + " (check the sample stride)");
    }
    if (auto cell = grid.locate(tr.z[k])) {
      g.values[*cell] += scale * tr.density(k);
    } else {
      ++outside;
    }
  }
  g.leakage = static_cast<double>(outside) / static_cast<double>(trajectories.size());
  return g;
}

bool ComparisonReport::passes(double floor, double factor) const {
  if (marginal_l1 > std::max(floor, factor * marginal_error)) return false;
  for (std::size_t a = 0; a < component_l1.size(); ++a) {
    if (component_l1[a] > std::max(floor, factor * component_error[a])) return false;
  }
  return true;
}

ComparisonReport compare(const CQGridState& a, const CQGridState& b) {
  if (!(a.grid == b.grid) || a.d != b.d) throw UsageError("compare: grids differ");
  const auto basis = hermitian_basis(a.d);
  const double vol = a.grid.cell_volume();
  const RealVector dist = l1_rows(grid_components(a, basis) - grid_components(b, basis), vol);
  return make_report(dist, RealVector::Zero(dist.size()), a.d, 0);
}

ComparisonReport compare(const std::vector<Trajectory>& mc, double t, const CQGridState& reference, int resamples,
                         std::uint64_t seed) {
  if (mc.empty()) throw UsageError("compare: empty ensemble");
  const auto basis = hermitian_basis(reference.d);
  const auto& grid = reference.grid;
  const double vol = grid.cell_volume();
  const int comps = static_cast<int>(basis.size());
  WeightedSet set;
  set.parts.push_back(reduce(mc, t, grid, basis));
  set.weights.push_back(1.0);
  const RealMatrix h = weighted_histogram(set, grid.size(), comps, vol);
  const RealVector dist = l1_rows(h - grid_components(reference, basis), vol);
  const RealVector err = bootstrap_floor(set, grid.size(), comps, vol, resamples, seed);
  return make_report(dist, err, reference.d, resamples);
}

ComparisonReport compare(const std::vector<const std::vector<Trajectory>*>& a, const std::vector<double>& wa,
                         const std::vector<const std::vector<Trajectory>*>& b, const std::vector<double>& wb,
                         double t, const PhaseGrid& grid, int resamples, std::uint64_t seed) {
  if (a.empty() || b.empty() || a.size() != wa.size() || b.size() != wb.size()) {
    throw UsageError("compare: each side needs matching ensembles and weights");
  }
  int d = 0;
  for (const auto* e : a) {
    if (!e || e->empty()) throw UsageError("compare: empty ensemble");
    const auto& tr = e->front();
    d = static_cast<int>(tr.is_pure() ? tr.psi.front().size() : tr.rho.front().rows());
  }
  const auto basis = hermitian_basis(d);
  const double vol = grid.cell_volume();
  const int comps = static_cast<int>(basis.size());
  auto build = [&](const std::vector<const std::vector<Trajectory>*>& side, const std::vector<double>& w) {
    WeightedSet set;
    for (std::size_t k = 0; k < side.size(); ++k) {
      if (!side[k] || side[k]->empty()) throw UsageError("compare: empty ensemble");
      set.parts.push_back(reduce(*side[k], t, grid, basis));
      set.weights.push_back(w[k]);
    }
    return set;
  };
  const WeightedSet sa = build(a, wa);
  const WeightedSet sb = build(b, wb);
  const RealVector dist =
      l1_rows(weighted_histogram(sa, grid.size(), comps, vol) - weighted_histogram(sb, grid.size(), comps, vol), vol);
  const RealVector ea = bootstrap_floor(sa, grid.size(), comps, vol, resamples, seed);
  const RealVector eb = bootstrap_floor(sb, grid.size(), comps, vol, resamples, mix64(seed));
  const RealVector err = (ea.cwiseAbs2() + eb.cwiseAbs2()).cwiseSqrt();
  return make_report(dist, err, d, resamples);
}

// ---------------------------------------------------------------------------
// Expectation series

Series expectation_series(const std::vector<Trajectory>& trajectories,
                          const std::function<double(const PhaseVector&, const DensityMatrix&)>& f) {
  if (trajectories.empty()) throw UsageError("expectation_series: empty ensemble");
  const Trajectory* longest = &trajectories.front();
  for (const auto& tr : trajectories) {
    if (tr.size() == 0) throw UsageError("expectation_series: empty trajectory");
    if (tr.size() > longest->size()) longest = &tr;
  }
  Series s;
  s.t = longest->t;
  const std::size_t K = s.t.size();
  std::vector<double> sum(K, 0.0);
  std::vector<double> sum2(K, 0.0);
  for (const auto& tr : trajectories) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t j = std::min(k, tr.size() - 1);
      const double v = f(tr.z[j], tr.density(j));
      sum[k] += v;
      sum2[k] += v * v;
    }
  }
  const double n = static_cast<double>(trajectories.size());
  s.mean.resize(K);
  s.stderr_.resize(K);
  s.count.assign(K, trajectories.size());
  for (std::size_t k = 0; k < K; ++k) {
    const double mean = sum[k] / n;
    const double var = n > 1 ? std::max(0.0, (sum2[k] - n * mean * mean) / (n - 1.0)) : 0.0;
    s.mean[k] = mean;
    s.stderr_[k] = std::sqrt(var / n);
  }
  return s;
}

Series expectation_series(const std::vector<Trajectory>& trajectories,
                          const std::function<ComplexMatrix(const PhaseVector&)>& observable) {
  return expectation_series(trajectories, [&](const PhaseVector& z, const DensityMatrix& rho) {
    return observable(z).transpose().cwiseProduct(rho).sum().real();
  });
}

}  // namespace cqdyn
