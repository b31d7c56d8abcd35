#include "cqdyn/numlin.hpp"

#include "cqdyn/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace cqdyn::numlin {

namespace {

void require_square(Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (rows != cols) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  }
}

template <typename Matrix>
Matrix pinv_impl(const Matrix& m, double rtol) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  if (!all_finite(m)) throw DimensionError("pinv: non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rtol * s(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

}  // namespace

bool all_finite(const ComplexMatrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i].real()) || !std::isfinite(m.data()[i].imag())) return false;
  }
  return true;
}

bool all_finite(const RealMatrix& m) { return m.allFinite(); }

double hermiticity_residual(const ComplexMatrix& m) {
  require_square(m.rows(), m.cols(), "hermiticity_residual");
  if (m.size() == 0) return 0.0;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const ComplexMatrix& m) {
  require_square(m.rows(), m.cols(), "min_eigenvalue");
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

bool is_psd(const ComplexMatrix& m, double tol) {
  require_square(m.rows(), m.cols(), "is_psd");
  if (m.size() == 0) return true;
  const double entry_scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (hermiticity_residual(m) > tol * entry_scale) {
    throw DimensionError("is_psd: matrix is not Hermitian (residual " + std::to_string(hermiticity_residual(m)) +
                         ")");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitize(m), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  return ev(0) >= -tol * scale;
}

bool is_psd(const RealMatrix& m, double tol) { return is_psd(ComplexMatrix(m.cast<Complex>()), tol); }

ComplexMatrix pinv(const ComplexMatrix& m, double rtol) { return pinv_impl(m, rtol); }

RealMatrix pinv(const RealMatrix& m, double rtol) { return pinv_impl(m, rtol); }

Eigen::Index rank(const ComplexMatrix& m, double rtol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  const auto& s = svd.singularValues();
  const double cutoff = rtol * s(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) ++r;
  }
  return r;
}

ComplexMatrix principal_sqrt(const ComplexMatrix& m, double tol) {
  require_square(m.rows(), m.cols(), "principal_sqrt");
  if (m.size() == 0) return m;
  const double entry_scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (hermiticity_residual(m) > tol * entry_scale) {
    throw DimensionError("principal_sqrt: matrix is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitize(m));
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev(0) < -tol * scale) {
    throw PositivityError("principal_sqrt: matrix has negative eigenvalue " + std::to_string(ev(0)));
  }
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  ComplexMatrix s = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  return hermitize(s);
}

RealMatrix factor_sigma(const RealMatrix& d2, double tol) {
  require_square(d2.rows(), d2.cols(), "factor_sigma");
  if (d2.size() == 0) return d2;
  if ((d2 - d2.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, d2.cwiseAbs().maxCoeff())) {
    throw DimensionError("factor_sigma: D2 is not symmetric");
  }
  ComplexMatrix s = principal_sqrt(ComplexMatrix((2.0 * d2).cast<Complex>()), tol);
  RealMatrix out = s.real();
  return 0.5 * (out + out.transpose());
}

bool is_diagonal(const ComplexMatrix& m) {
  // Off-diagonal part of column j, as raw (re, im) doubles, is the two runs
  // around the diagonal entry.
  const double* x = reinterpret_cast<const double*>(m.data());
  const Eigen::Index rows = m.rows();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double* col = x + 2 * j * rows;
    const Eigen::Index head = 2 * std::min(j, rows);
    const Eigen::Index tail = std::max<Eigen::Index>(0, 2 * rows - head - 2);
    if (Eigen::Map<const Eigen::ArrayXd>(col, head).abs().sum() != 0.0) return false;
    if (tail > 0 && Eigen::Map<const Eigen::ArrayXd>(col + head + 2, tail).abs().sum() != 0.0) return false;
  }
  return true;
}

double trace_distance(const ComplexMatrix& a, const ComplexMatrix& b) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitize(a - b), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace cqdyn::numlin
