#include "cdetect/sensing.hpp"

#include <cmath>
#include <sstream>

#include "cdetect/errors.hpp"

namespace cdetect {

namespace {

constexpr double kIdentityTol = 1e-8;

Matrix whitening_filter(const Matrix& phi, const BackgroundModel& bg) {
  Matrix noise_cov =
      phi * bg.covariance() * phi.transpose() +
      bg.sensor_variance() * Matrix::Identity(phi.rows(), phi.rows());
  noise_cov = 0.5 * (noise_cov + noise_cov.transpose());
  return inv_sqrt_sym(noise_cov);
}

}  // namespace

BackgroundTolerance check_background_tolerance(const Matrix& a,
                                               const BackgroundModel& bg) {
  if (a.cols() != bg.dim()) {
    throw ShapeError("check_background_tolerance: dimension mismatch");
  }
  BackgroundTolerance result;
  result.lambda_max = bg.lambda_max();
  const double norm = spectral_norm(a);
  result.threshold = 1.0 / (norm * norm);
  result.ok = result.lambda_max < result.threshold;
  return result;
}

SensingPlan::SensingPlan(Matrix a, Matrix phi, Matrix whitener,
                         BackgroundModel bg, PlanKind kind)
    : a_(std::move(a)),
      phi_(std::move(phi)),
      whitener_(std::move(whitener)),
      background_(std::move(bg)),
      kind_(kind) {}

SensingPlan SensingPlan::designed(const Matrix& a, const BackgroundModel& bg) {
  const BackgroundTolerance tol = check_background_tolerance(a, bg);
  if (!tol.ok) {
    std::ostringstream msg;
    msg << "designed plan: background lambda_max " << tol.lambda_max
        << " is not below 1/|A|^2 = " << tol.threshold;
    throw BackgroundToleranceError(msg.str(), tol.lambda_max, tol.threshold);
  }
  const Eigen::Index k = a.rows();
  Matrix b = Matrix::Identity(k, k) - a * bg.covariance() * a.transpose();
  b = 0.5 * (b + b.transpose());
  const Matrix phi = bg.sigma() * inv_sqrt_sym(b) * a;
  const Matrix whitener = whitening_filter(phi, bg);

  const double defect = (whitener * phi - a).cwiseAbs().maxCoeff();
  if (defect > kIdentityTol) {
    std::ostringstream msg;
    msg << "designed plan: whitened operator differs from A by " << defect;
    throw NotPositiveDefiniteError(msg.str(), defect);
  }
  return SensingPlan(a, phi, whitener, bg, PlanKind::kDesigned);
}

SensingPlan SensingPlan::random_phi(Eigen::Index k, const BackgroundModel& bg,
                                    RngStream stream) {
  const Matrix phi =
      gaussian_matrix(k, bg.dim(), 1.0 / static_cast<double>(k), stream);
  const Matrix whitener = whitening_filter(phi, bg);
  Matrix effective = whitener * phi;
  return SensingPlan(std::move(effective), phi, whitener, bg,
                     PlanKind::kRandomPhi);
}

SensingPlan SensingPlan::identity(const BackgroundModel& bg) {
  const Matrix eye = Matrix::Identity(bg.dim(), bg.dim());
  return SensingPlan(eye, eye, eye, bg, PlanKind::kIdentity);
}

Vector whiten(const SensingPlan& plan, const Vector& z, const Vector& mu_b) {
  if (z.size() != plan.k() || mu_b.size() != plan.n()) {
    throw ShapeError("whiten: dimension mismatch");
  }
  if (mu_b.isZero(0.0)) {
    return plan.whitener() * z;
  }
  return plan.whitener() * (z - plan.phi() * mu_b);
}

DistanceCheck verify_distance_preservation(const Matrix& a,
                                           std::span<const Vector> points,
                                           double epsilon) {
  if (points.size() < 2) {
    throw InvalidInputError("verify_distance_preservation: need >= 2 points");
  }
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) {
    throw InvalidInputError(
        "verify_distance_preservation: epsilon must lie in (0, 1)");
  }
  DistanceCheck check;
  check.ok = true;
  bool any_pair = false;
  double lo = 1.0, hi = 1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double dist = (points[i] - points[j]).norm();
      if (dist == 0.0) continue;  // inequality is vacuous for equal points
      const double mapped = (a * (points[i] - points[j])).norm();
      const double ratio = mapped / dist;
      if (!any_pair) {
        lo = hi = ratio;
        any_pair = true;
      } else {
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
      }
    }
  }
  check.worst_ratio_low = lo;
  check.worst_ratio_high = hi;
  check.ok = (lo >= 1.0 - epsilon) && (hi <= 1.0 + epsilon);
  return check;
}

}  // namespace cdetect
