#ifndef CDETECT_NUMERICS_HPP
#define CDETECT_NUMERICS_HPP

#include <Eigen/Dense>
#include <optional>

#include "cdetect/rng.hpp"

namespace cdetect {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Relative symmetry tolerance for matrices that must be symmetric:
// |m(i,j) - m(j,i)| <= tol * max|m|.
inline constexpr double kSymmetryTol = 1e-12;

bool is_symmetric(const Matrix& m, double rel_tol = kSymmetryTol);
// Throws InvalidInputError when `m` is not square-symmetric within tolerance
// or contains non-finite entries.
void require_symmetric(const Matrix& m, const char* context);

// Largest singular value.  Relative accuracy better than 1e-8.
double spectral_norm(const Matrix& a);

// Inverse symmetric square root via eigendecomposition: M = Q L Q^T maps to
// Q L^{-1/2} Q^T.  Eigenvalues below `floor` raise NotPositiveDefiniteError
// carrying the offending eigenvalue.  When `floor` is not given it defaults
// to 1e-10 times the largest eigenvalue.
Matrix inv_sqrt_sym(const Matrix& m, std::optional<double> floor = {});

// CDF of the noncentral chi-squared distribution with `dof` degrees of
// freedom and noncentrality `nc`, evaluated by the Poisson mixture of central
// chi-squared CDFs.  The series stops once the unprocessed Poisson mass is
// below 1e-12; absolute error is below 1e-10.
double noncentral_chisq_cdf(double x, int dof, double nc);

// Dense matrix with i.i.d. N(0, variance) entries, filled row by row, fully
// determined by `stream`.
Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double variance,
                       RngStream stream);

// Vector with i.i.d. standard normal entries drawn from `sampler`.
Vector standard_normal_vector(Eigen::Index n, Sampler& sampler);

}  // namespace cdetect

#endif  // CDETECT_NUMERICS_HPP
