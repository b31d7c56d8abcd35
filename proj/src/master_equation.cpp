#include "cqdyn/ensemble.hpp"
#include "cqdyn/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

namespace cqdyn {

namespace {

// Real matrix of a Hermiticity-preserving superoperator in the orthonormal
// Hermitian basis: M_ab = Tr(B_a F(B_b)).
template <class F>
RealMatrix vectorise(const std::vector<ComplexMatrix>& basis, F&& f) {
  const auto D = static_cast<Eigen::Index>(basis.size());
  RealMatrix m(D, D);
  for (Eigen::Index b = 0; b < D; ++b) {
    const ComplexMatrix image = f(basis[b]);
    for (Eigen::Index a = 0; a < D; ++a) m(a, b) = basis[a].transpose().cwiseProduct(image).sum().real();
  }
  return m;
}

ComplexMatrix lindblad_generator(const Coefficients& c, const ComplexMatrix& x) {
  ComplexMatrix out = Complex(0.0, -1.0) * (c.hamiltonian * x - x * c.hamiltonian);
  const auto p = static_cast<Eigen::Index>(c.lindblad.size());
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = 0; b < p; ++b) {
      const Complex w = c.d0(a, b);
      if (w == Complex(0.0, 0.0)) continue;
      const ComplexMatrix& la = c.lindblad[a];
      const ComplexMatrix& lb = c.lindblad[b];
      const ComplexMatrix lbla = lb.adjoint() * la;
      out += w * (la * x * lb.adjoint() - 0.5 * (lbla * x + x * lbla));
    }
  }
  return out;
}

// Velocity superoperator along coordinate i: X -> D1C_i X + A_i X + X A_i^dag
// with A_i = sum_a conj(D1_ia) L_a. Its trace part is the classical drift.
RealMatrix velocity(const Coefficients& c, const std::vector<ComplexMatrix>& basis, int i) {
  const Eigen::Index d = c.hamiltonian.rows();
  ComplexMatrix a = ComplexMatrix::Zero(d, d);
  for (std::size_t al = 0; al < c.lindblad.size(); ++al) {
    a += std::conj(c.d1(i, static_cast<Eigen::Index>(al))) * c.lindblad[al];
  }
  const double drift = c.d1c(i);
  return vectorise(basis, [&](const ComplexMatrix& x) -> ComplexMatrix { return drift * x + a * x + x * a.adjoint(); });
}

// Characteristic decomposition of a face velocity. Falls back to a Rusanov
// flux (speed = spectral bound) when the spectrum is not real.
struct Face {
  bool real_spectrum = true;
  RealMatrix v;
  RealMatrix right;
  RealMatrix left;  // inverse of right
  RealVector speed;
  double max_speed = 0.0;
};

Face decompose(RealMatrix v) {
  Face f;
  f.v = v;
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if (v.cwiseAbs().maxCoeff() == 0.0) {
    f.speed = RealVector::Zero(v.rows());
    f.right = RealMatrix::Identity(v.rows(), v.cols());
    f.left = f.right;
    return f;
  }
  Eigen::EigenSolver<RealMatrix> es(v);
  const Eigen::VectorXcd ev = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  bool real = es.info() == Eigen::Success && ev.imag().cwiseAbs().maxCoeff() <= 1e-12 * scale &&
              vecs.imag().cwiseAbs().maxCoeff() <= 1e-9;
  if (real) {
    f.right = vecs.real();
    Eigen::FullPivLU<RealMatrix> lu(f.right);
    real = lu.isInvertible() && lu.rcond() > 1e-10;
    if (real) {
      f.left = lu.inverse();
      f.speed = ev.real();
    }
  }
  f.real_spectrum = real;
  f.max_speed = real ? f.speed.cwiseAbs().maxCoeff() : ev.cwiseAbs().maxCoeff();
  if (!real) f.max_speed = std::max(f.max_speed, v.operatorNorm());
  return f;
}

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

class Solver {
 public:
  Solver(const CQModel& model, const PhaseGrid& grid, int d)
      : grid_(grid), basis_(hermitian_basis(d)), D_(static_cast<Eigen::Index>(basis_.size())) {
    const std::size_t cells = grid.size();
    const int n = grid.dims();
    generator_.resize(cells);
    diffusion_.resize(cells);
    coords_.resize(cells);
    stride_.resize(n);
    std::size_t s = 1;
    for (int k = 0; k < n; ++k) {
      stride_[k] = s;
      s *= static_cast<std::size_t>(grid.cells[k]);
    }
    for (std::size_t c = 0; c < cells; ++c) {
      const auto idx = grid.unflat(c);
      for (int k = 0; k < n; ++k) coords_[c][k] = idx[k];
      const Coefficients co = model.at(grid.center(c));
      generator_[c] = vectorise(basis_, [&](const ComplexMatrix& x) { return lindblad_generator(co, x); });
      diffusion_[c] = co.d2();
      if (!numlin::all_finite(generator_[c]) || !numlin::all_finite(diffusion_[c])) {
        throw DimensionError("master equation: non-finite coefficients at a cell center");
      }
      gen_rate_ = std::max(gen_rate_, generator_[c].operatorNorm());
      for (int k = 0; k < n; ++k) max_d2_[k] = std::max(max_d2_[k], diffusion_[c](k, k));
      for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) mixed_ = mixed_ || (j != k && diffusion_[c](k, j) != 0.0);
      }
    }
    faces_.resize(n);
    for (int k = 0; k < n; ++k) {
      faces_[k].resize(cells);
      for (std::size_t c = 0; c < cells; ++c) {
        const auto idx = grid.unflat(c);
        if (idx[k] == grid.cells[k] - 1) continue;  // boundary face, zero flux
        RealVector zf = grid.center(c);
        zf(k) += 0.5 * grid.width(k);
        faces_[k][c] = decompose(velocity(model.at(zf), basis_, k));
        max_speed_[k] = std::max(max_speed_[k], faces_[k][c].max_speed);
      }
    }
  }

  double stable_dt(double safety) const {
    double rate = 0.0;
    for (int k = 0; k < grid_.dims(); ++k) {
      const double h = grid_.width(k);
      rate += max_speed_[k] / h + 2.0 * max_d2_[k] / (h * h);
    }
    rate += gen_rate_ / 2.5;  // SSP-RK3 covers |dt lambda| <~ 2.5 on the imaginary axis region used here
    return rate > 0.0 ? safety / rate : std::numeric_limits<double>::infinity();
  }

  double advective_bound(double safety) const {
    double b = std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid_.dims(); ++k) {
      if (max_speed_[k] > 0.0) b = std::min(b, safety * grid_.width(k) / max_speed_[k]);
    }
    return b;
  }

  double diffusive_bound(double safety) const {
    double b = std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid_.dims(); ++k) {
      if (max_d2_[k] > 0.0) b = std::min(b, safety * grid_.width(k) * grid_.width(k) / (2.0 * max_d2_[k]));
    }
    return b;
  }

  RealMatrix to_components(const CQGridState& g) const {
    RealMatrix v(D_, static_cast<Eigen::Index>(g.values.size()));
    for (std::size_t c = 0; c < g.values.size(); ++c) {
      v.col(static_cast<Eigen::Index>(c)) = hermitian_components(basis_, g.values[c]);
    }
    return v;
  }

  void to_state(const RealMatrix& v, CQGridState& g) const {
    for (std::size_t c = 0; c < g.values.size(); ++c) {
      ComplexMatrix m = ComplexMatrix::Zero(g.d, g.d);
      for (Eigen::Index a = 0; a < D_; ++a) m += v(a, static_cast<Eigen::Index>(c)) * basis_[a];
      g.values[c] = m;
    }
  }

  void rhs(const RealMatrix& v, RealMatrix& out) const {
    const std::size_t cells = grid_.size();
    out.resize(D_, static_cast<Eigen::Index>(cells));
    for (std::size_t c = 0; c < cells; ++c) {
      out.col(static_cast<Eigen::Index>(c)).noalias() = generator_[c] * v.col(static_cast<Eigen::Index>(c));
    }
    RealVector flux(D_);
    for (int k = 0; k < grid_.dims(); ++k) {
      const double h = grid_.width(k);
      const std::size_t st = stride_[k];
      for (std::size_t c = 0; c < cells; ++c) {
        const auto& idx = coords_[c];
        if (idx[k] == grid_.cells[k] - 1) continue;
        const std::size_t r = c + st;
        flux.setZero();
        advective_flux(k, c, r, idx[k], v, flux);
        diffusive_flux(k, c, r, idx, v, flux);
        // flux is the net outward transport through the face from c to r
        out.col(static_cast<Eigen::Index>(c)) -= flux / h;
        out.col(static_cast<Eigen::Index>(r)) += flux / h;
      }
    }
  }

  const std::vector<ComplexMatrix>& basis() const { return basis_; }

 private:
  void advective_flux(int k, std::size_t c, std::size_t r, int i, const RealMatrix& v, RealVector& flux) const {
    const Face& f = faces_[k][c];
    if (f.max_speed == 0.0) return;
    const auto col = [&](std::size_t j) { return v.col(static_cast<Eigen::Index>(j)); };
    const bool has_ll = i > 0;
    const bool has_rr = i + 1 < grid_.cells[k] - 1;
    if (!f.real_spectrum) {
      flux += 0.5 * f.v * (col(c) + col(r)) - 0.5 * f.max_speed * (col(r) - col(c));
      return;
    }
    const std::size_t st = stride_[k];
    const RealVector wl = f.left * col(c);
    const RealVector wr = f.left * col(r);
    RealVector wll;
    RealVector wrr;
    if (has_ll) wll = f.left * col(c - st);
    if (has_rr) wrr = f.left * col(r + st);
    RealVector wf(D_);
    for (Eigen::Index m = 0; m < D_; ++m) {
      const double lam = f.speed(m);
      if (lam > 0.0) {
        const double slope = has_ll ? minmod(wl(m) - wll(m), wr(m) - wl(m)) : 0.0;
        wf(m) = lam * (wl(m) + 0.5 * slope);
      } else if (lam < 0.0) {
        const double slope = has_rr ? minmod(wr(m) - wl(m), wrr(m) - wr(m)) : 0.0;
        wf(m) = lam * (wr(m) - 0.5 * slope);
      } else {
        wf(m) = 0.0;
      }
    }
    flux += f.right * wf;
  }

  // -sum_j d_j (D2_kj v) at the face between c and r (Ito form).
  void diffusive_flux(int k, std::size_t c, std::size_t r, const std::array<int, 2>& idx, const RealMatrix& v,
                      RealVector& flux) const {
    const double h = grid_.width(k);
    const auto col = [&](std::size_t j) { return v.col(static_cast<Eigen::Index>(j)); };
    const double dl = diffusion_[c](k, k);
    const double dr = diffusion_[r](k, k);
    if (dl != 0.0 || dr != 0.0) flux -= (dr * col(r) - dl * col(c)) / h;
    if (!mixed_) return;
    for (int j = 0; j < grid_.dims(); ++j) {
      if (j == k) continue;
      const std::size_t sj = stride_[j];
      const int ij = idx[j];
      const bool lo = ij > 0;
      const bool hi = ij < grid_.cells[j] - 1;
      const double span = grid_.width(j) * ((lo ? 1 : 0) + (hi ? 1 : 0));
      if (span == 0.0) continue;
      auto term = [&](std::size_t base) {
        const std::size_t up = hi ? base + sj : base;
        const std::size_t dn = lo ? base - sj : base;
        return RealVector(diffusion_[up](k, j) * col(up) - diffusion_[dn](k, j) * col(dn));
      };
      flux -= 0.5 * (term(c) + term(r)) / span;
    }
  }

  PhaseGrid grid_;
  std::vector<ComplexMatrix> basis_;
  Eigen::Index D_;
  std::vector<RealMatrix> generator_;
  std::vector<RealMatrix> diffusion_;
  std::vector<std::vector<Face>> faces_;
  std::vector<std::size_t> stride_;
  std::vector<std::array<int, 2>> coords_;
  double gen_rate_ = 0.0;
  double max_speed_[2] = {0.0, 0.0};
  double max_d2_[2] = {0.0, 0.0};
  bool mixed_ = false;
};

}  // namespace

CQGridState solve_master_equation(const CQModel& model, const CQGridState& initial, const MasterEquationOptions& opts,
                                  MasterEquationStats* stats) {
  const PhaseGrid& grid = initial.grid;
  if (model.n > 2) {
    throw UsageError("master equation solver: only models with n <= 2 classical dimensions are supported (got " +
                     std::to_string(model.n) + ")");
  }
  if (grid.dims() != model.n) throw UsageError("master equation solver: the grid must resolve every coordinate");
  for (int k = 0; k < grid.dims(); ++k) {
    if (grid.axes[k] != k) throw UsageError("master equation solver: grid axes must be 0..n-1 in order");
  }
  if (initial.d != model.d || initial.values.size() != grid.size()) {
    throw DimensionError("master equation solver: initial state does not match the model");
  }
  if (!(opts.T >= 0.0)) throw UsageError("master equation solver: T must be non-negative");

  Solver solver(model, grid, model.d);
  const double bound = solver.stable_dt(opts.safety);
  double dt = opts.dt;
  std::uint64_t steps = 0;
  if (opts.T > 0.0) {
    if (dt <= 0.0) {
      steps = static_cast<std::uint64_t>(std::ceil(opts.T / bound - 1e-9));
      steps = std::max<std::uint64_t>(steps, 1);
      dt = opts.T / static_cast<double>(steps);
    } else {
      if (dt > bound * (1.0 + 1e-12)) {
        throw StepSizeError("master equation: dt = " + std::to_string(dt) + " exceeds the stability bound " +
                            std::to_string(bound) + " (advective " + std::to_string(solver.advective_bound(opts.safety)) +
                            ", diffusive " + std::to_string(solver.diffusive_bound(opts.safety)) + ")");
      }
      steps = static_cast<std::uint64_t>(std::ceil(opts.T / dt - 1e-9));
    }
  }

  RealMatrix v = solver.to_components(initial);
  const double sqrt_d = std::sqrt(static_cast<double>(model.d));
  const double vol = grid.cell_volume();
  const double trace0 = v.row(0).sum() * sqrt_d * vol;
  RealMatrix k1, k2, k3, stage;
  double t = 0.0;
  for (std::uint64_t s = 0; s < steps; ++s) {
    const double h = std::min(dt, opts.T - t);
    solver.rhs(v, k1);
    stage = v + h * k1;
    solver.rhs(stage, k2);
    stage = 0.75 * v + 0.25 * (stage + h * k2);
    solver.rhs(stage, k3);
    v = (1.0 / 3.0) * v + (2.0 / 3.0) * (stage + h * k3);
    t += h;
    if (!v.allFinite()) throw StepSizeError("master equation: solution became non-finite; reduce dt");
  }

  CQGridState out = CQGridState::zeros(grid, model.d);
  solver.to_state(v, out);
  if (stats) {
    stats->dt = dt;
    stats->steps = steps;
    stats->max_stable_dt = bound;
    stats->trace_drift = std::abs(v.row(0).sum() * sqrt_d * vol - trace0);
    stats->boundary_mass = out.boundary_mass();
    double mn = 0.0;
    for (const auto& m : out.values) {
      if (m.cwiseAbs().maxCoeff() == 0.0) continue;
      mn = std::min(mn, numlin::min_eigenvalue(m) * vol);
    }
    stats->min_cell_eigenvalue = mn;
  }
  return out;
}

}  // namespace cqdyn
