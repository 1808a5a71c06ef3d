#include "cdetect/numerics.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "cdetect/errors.hpp"

namespace cdetect {

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  if (!m.allFinite()) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  const double tol = rel_tol * std::max(scale, 1e-300);
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

void require_symmetric(const Matrix& m, const char* context) {
  if (!is_symmetric(m)) {
    std::ostringstream msg;
    msg << context << ": matrix is not symmetric within tolerance";
    throw InvalidInputError(msg.str());
  }
}

double spectral_norm(const Matrix& a) {
  if (!a.allFinite()) {
    throw InvalidInputError("spectral_norm: non-finite entries");
  }
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  // Eigendecompose the smaller Gram matrix; sigma_max = sqrt(lambda_max).
  Matrix gram;
  if (a.rows() <= a.cols()) {
    gram = a * a.transpose();
  } else {
    gram = a.transpose() * a;
  }
  gram = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lambda = eig.eigenvalues().maxCoeff();
  return std::sqrt(std::max(lambda, 0.0));
}

Matrix inv_sqrt_sym(const Matrix& m, std::optional<double> floor) {
  require_symmetric(m, "inv_sqrt_sym");
  if (floor && *floor <= 0.0) {
    throw InvalidInputError("inv_sqrt_sym: floor must be positive");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success) {
    throw InvalidInputError("inv_sqrt_sym: eigendecomposition failed");
  }
  const Vector& values = eig.eigenvalues();
  const double largest = values(values.size() - 1);
  const double smallest = values(0);
  const double effective_floor =
      floor ? *floor : 1e-10 * std::max(largest, 0.0);
  if (smallest < effective_floor || largest <= 0.0) {
    std::ostringstream msg;
    msg << "inv_sqrt_sym: eigenvalue " << smallest << " below floor "
        << effective_floor << "; matrix is not safely positive definite";
    throw NotPositiveDefiniteError(msg.str(), smallest);
  }
  const Vector inv_roots = values.array().rsqrt();
  Matrix result = eig.eigenvectors() * inv_roots.asDiagonal() *
                  eig.eigenvectors().transpose();
  return 0.5 * (result + result.transpose());
}

namespace {

// Regularized lower incomplete gamma P(a, x); equals the chi-squared CDF
// with 2a degrees of freedom evaluated at 2x.
double central_chisq_cdf_half(double a, double half_x) {
  return boost::math::gamma_p(a, half_x);
}

}  // namespace

double noncentral_chisq_cdf(double x, int dof, double nc) {
  if (dof < 1) {
    throw InvalidInputError("noncentral_chisq_cdf: dof must be >= 1");
  }
  if (!(x >= 0.0) || !std::isfinite(x)) {
    throw InvalidInputError("noncentral_chisq_cdf: x must be finite and >= 0");
  }
  if (!(nc >= 0.0) || !std::isfinite(nc)) {
    throw InvalidInputError("noncentral_chisq_cdf: nc must be finite and >= 0");
  }
  if (x == 0.0) return 0.0;

  const double half_x = 0.5 * x;
  const double half_nu = 0.5 * static_cast<double>(dof);
  if (nc == 0.0) return central_chisq_cdf_half(half_nu, half_x);

  constexpr double kTailMass = 1e-12;
  const double h = 0.5 * nc;

  // Poisson mixture sum_j w_j F(x; dof + 2j), anchored at the Poisson mode
  // and swept outward.  The central CDF and the Poisson weights both admit
  // one-step recurrences:
  //   F_{j+1} = F_j - t_j,   t_{j+1} = t_j * half_x / (a_j + 1),
  // with a_j = half_nu + j and t_j = half_x^{a_j} e^{-half_x} / Gamma(a_j+1),
  // so only the anchor terms need incomplete-gamma / lgamma evaluations.
  const long long mode = static_cast<long long>(h);
  const double w_mode =
      std::exp(-h + static_cast<double>(mode) * std::log(h) -
               std::lgamma(static_cast<double>(mode) + 1.0));
  const double a_mode = half_nu + static_cast<double>(mode);
  const double f_mode = central_chisq_cdf_half(a_mode, half_x);
  const double t_mode =
      std::exp(a_mode * std::log(half_x) - half_x - std::lgamma(a_mode + 1.0));

  double sum = w_mode * f_mode;
  double mass = w_mode;

  // Downward sweep, j = mode-1, ..., 0.  Weights decrease below the mode, so
  // once w*j drops under the tail budget the unswept remainder is negligible.
  {
    double w = w_mode;
    double f = f_mode;
    double t = t_mode;
    for (long long j = mode; j >= 1; --j) {
      const double a = half_nu + static_cast<double>(j);
      w *= static_cast<double>(j) / h;
      t *= a / half_x;
      f = std::min(1.0, f + t);
      sum += w * f;
      mass += w;
      const double rest = w * static_cast<double>(j - 1);
      if (rest < kTailMass) {
        mass += rest;
        break;
      }
    }
  }

  // Upward sweep, j = mode+1, ... until the remaining Poisson mass is below
  // the tail budget.  F decreases in j, so a zero F ends the sweep early.
  {
    double w = w_mode;
    double f = f_mode;
    double t = t_mode;
    long long j = mode;
    while (mass < 1.0 - kTailMass) {
      const double a = half_nu + static_cast<double>(j);
      w *= h / static_cast<double>(j + 1);
      f = std::max(0.0, f - t);
      t *= half_x / (a + 1.0);
      sum += w * f;
      mass += w;
      ++j;
      if (f <= 0.0) break;
      if (j - mode > 100000000LL) break;
    }
  }

  return std::clamp(sum, 0.0, 1.0);
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double variance,
                       RngStream stream) {
  if (rows < 1 || cols < 1) {
    throw InvalidInputError("gaussian_matrix: dimensions must be positive");
  }
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw InvalidInputError("gaussian_matrix: variance must be positive");
  }
  const double sd = std::sqrt(variance);
  Sampler sampler(stream);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = sd * sampler.normal();
    }
  }
  return m;
}

Vector standard_normal_vector(Eigen::Index n, Sampler& sampler) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = sampler.normal();
  return v;
}

}  // namespace cdetect
