#pragma once

#include <Eigen/Dense>

#include <complex>

namespace cqdyn {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Classical phase-space point, block ordered (q_1..q_k, p_1..p_k) for
/// Hamiltonian models.
using PhaseVector = Eigen::VectorXd;
using StateVector = Eigen::VectorXcd;
using DensityMatrix = Eigen::MatrixXcd;

namespace numlin {

inline constexpr double kPinvRtol = 1e-12;

bool all_finite(const ComplexMatrix& m);
bool all_finite(const RealMatrix& m);

/// Largest |M - M^dagger| entry.
double hermiticity_residual(const ComplexMatrix& m);

/// True iff the smallest eigenvalue is >= -tol * max(1, largest |eigenvalue|).
/// Throws DimensionError for non-square input or if M is not Hermitian within
/// tol (scaled the same way).
bool is_psd(const ComplexMatrix& m, double tol);
bool is_psd(const RealMatrix& m, double tol);

/// Smallest eigenvalue of a Hermitian matrix (the input is symmetrised first).
double min_eigenvalue(const ComplexMatrix& m);

/// Moore-Penrose pseudoinverse. Singular values below rtol * s_max are
/// treated as zero.
ComplexMatrix pinv(const ComplexMatrix& m, double rtol = kPinvRtol);
RealMatrix pinv(const RealMatrix& m, double rtol = kPinvRtol);

/// Numerical rank with the same cutoff rule as pinv.
Eigen::Index rank(const ComplexMatrix& m, double rtol = kPinvRtol);

/// Principal (Hermitian PSD) square root. Eigenvalues in [-tol*scale, 0) are
/// clamped to zero; anything more negative raises PositivityError.
ComplexMatrix principal_sqrt(const ComplexMatrix& m, double tol = 1e-10);

/// sigma = principal_sqrt(2 * D2), so that D2 = sigma sigma^T / 2 with sigma
/// symmetric. D2 must be real symmetric PSD.
RealMatrix factor_sigma(const RealMatrix& d2, double tol = 1e-10);

/// Hermitian part (M + M^dagger) / 2.
inline ComplexMatrix hermitize(const ComplexMatrix& m) { return 0.5 * (m + m.adjoint()); }

/// True if every off-diagonal entry is exactly zero.
bool is_diagonal(const ComplexMatrix& m);

/// Trace distance 0.5 * ||a - b||_1 between Hermitian matrices.
double trace_distance(const ComplexMatrix& a, const ComplexMatrix& b);

/// Kronecker product.
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

}  // namespace numlin
}  // namespace cqdyn
