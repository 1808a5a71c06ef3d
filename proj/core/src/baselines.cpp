#include "cdetect/baselines.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "cdetect/errors.hpp"

namespace cdetect {

DownsamplePlan DownsamplePlan::make(Eigen::Index n, Eigen::Index k,
                                    double scale) {
  if (n < 1 || k < 1 || k > n) {
    throw InvalidInputError("DownsamplePlan: need 1 <= K <= N");
  }
  if (!(scale > 0.0)) {
    throw InvalidInputError("DownsamplePlan: scale must be positive");
  }
  DownsamplePlan plan;
  plan.n = n;
  plan.k = k;
  plan.block = (n + k - 1) / k;
  plan.scale = scale;
  return plan;
}

Vector downsample(const Vector& g, const DownsamplePlan& plan) {
  if (g.size() != plan.n) {
    throw ShapeError("downsample: input length does not match the plan");
  }
  Vector out = Vector::Zero(plan.k);
  for (Eigen::Index j = 0; j < plan.k; ++j) {
    const Eigen::Index start = j * plan.block;
    const Eigen::Index stop = std::min(start + plan.block, plan.n);
    for (Eigen::Index l = start; l < stop; ++l) out(j) += g(l);
  }
  return out;
}

namespace {

struct MixtureGeometry {
  Eigen::LLT<Matrix> chol;
  double log_det = 0.0;  // log det(G)
};

MixtureGeometry factor_covariance(const Matrix& g_cov, Eigen::Index k) {
  if (g_cov.rows() != k || g_cov.cols() != k) {
    throw ShapeError("downsampled detector: covariance dimension mismatch");
  }
  require_symmetric(g_cov, "downsampled detector");
  MixtureGeometry geom;
  geom.chol.compute(g_cov);
  if (geom.chol.info() != Eigen::Success) {
    throw NotPositiveDefiniteError(
        "downsampled detector: covariance is not positive definite",
        std::numeric_limits<double>::quiet_NaN());
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    geom.log_det += 2.0 * std::log(geom.chol.matrixL()(i, i));
  }
  return geom;
}

double mahalanobis_sq(const MixtureGeometry& geom, const Vector& r) {
  return r.dot(geom.chol.solve(r));
}

DownsamplePlan plan_for(const Dictionary& dict, Eigen::Index k) {
  return DownsamplePlan::make(dict.dim(), k);
}

}  // namespace

int classify_map_downsampled(const Vector& y, double alpha,
                             const Dictionary& dict, const Matrix& g_cov) {
  const Eigen::Index k = y.size();
  const MixtureGeometry geom = factor_covariance(g_cov, k);
  const DownsamplePlan plan = plan_for(dict, k);
  int best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (int l = 0; l < dict.size(); ++l) {
    const Vector mean = alpha * downsample(dict.target(l), plan);
    const double score =
        0.5 * mahalanobis_sq(geom, y - mean) - std::log(dict.prior(l));
    if (score < best_score) {
      best_score = score;
      best = l;
    }
  }
  return best;
}

double glrt_anomaly_score(const Vector& y, double alpha,
                          const Dictionary& dict, const Matrix& g_cov) {
  const Eigen::Index k = y.size();
  const MixtureGeometry geom = factor_covariance(g_cov, k);
  const DownsamplePlan plan = plan_for(dict, k);
  std::vector<double> exponents(dict.size());
  double max_exponent = -std::numeric_limits<double>::infinity();
  for (int l = 0; l < dict.size(); ++l) {
    const Vector mean = alpha * downsample(dict.target(l), plan);
    exponents[l] = -0.5 * mahalanobis_sq(geom, y - mean);
    max_exponent = std::max(max_exponent, exponents[l]);
  }
  double accum = 0.0;
  for (double e : exponents) accum += std::exp(e - max_exponent);
  const double log_mixture = max_exponent + std::log(accum) -
                             std::log(static_cast<double>(dict.size()));
  const double log_norm =
      -0.5 * (static_cast<double>(k) * std::log(2.0 * std::numbers::pi) +
              geom.log_det);
  return -(log_mixture + log_norm);
}

DownsampledMixture::DownsampledMixture(const Dictionary& dict, Eigen::Index k,
                                       const Matrix& g_cov)
    : k_(k) {
  const MixtureGeometry geom = factor_covariance(g_cov, k);
  chol_ = geom.chol;
  log_det_ = geom.log_det;
  const DownsamplePlan plan = plan_for(dict, k);
  means_.reserve(dict.size());
  log_priors_.reserve(dict.size());
  for (int l = 0; l < dict.size(); ++l) {
    means_.push_back(downsample(dict.target(l), plan));
    log_priors_.push_back(std::log(dict.prior(l)));
  }
}

int DownsampledMixture::classify(const Vector& y, double alpha) const {
  int best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < means_.size(); ++l) {
    const Vector r = y - alpha * means_[l];
    const double score = 0.5 * r.dot(chol_.solve(r)) - log_priors_[l];
    if (score < best_score) {
      best_score = score;
      best = static_cast<int>(l);
    }
  }
  return best;
}

double DownsampledMixture::score(const Vector& y, double alpha) const {
  std::vector<double> exponents(means_.size());
  double max_exponent = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < means_.size(); ++l) {
    const Vector r = y - alpha * means_[l];
    exponents[l] = -0.5 * r.dot(chol_.solve(r));
    max_exponent = std::max(max_exponent, exponents[l]);
  }
  double accum = 0.0;
  for (double e : exponents) accum += std::exp(e - max_exponent);
  const double log_mixture = max_exponent + std::log(accum) -
                             std::log(static_cast<double>(means_.size()));
  const double log_norm =
      -0.5 * (static_cast<double>(k_) * std::log(2.0 * std::numbers::pi) +
              log_det_);
  return -(log_mixture + log_norm);
}

double snr_matching_scale(const Dictionary& dict, const Matrix& phi,
                          const DownsamplePlan& plan) {
  if (phi.cols() != dict.dim()) {
    throw ShapeError("snr_matching_scale: projection dimension mismatch");
  }
  double down_energy = 0.0;
  double proj_energy = 0.0;
  for (const Vector& f : dict.targets()) {
    down_energy += downsample(f, plan).squaredNorm();
    proj_energy += (phi * f).squaredNorm();
  }
  if (proj_energy <= 0.0) {
    throw InvalidInputError("snr_matching_scale: degenerate projection");
  }
  return std::sqrt(down_energy / proj_energy);
}

}  // namespace cdetect
