#include "cdetect/dsd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdetect/errors.hpp"

namespace cdetect {

MapDecision classify_map(const Vector& y, double alpha, const Matrix& a,
                         const Dictionary& dict, int location) {
  if (a.cols() != dict.dim() || a.rows() != y.size()) {
    throw ShapeError("classify_map: dimension mismatch");
  }
  if (alpha < 0.0) {
    throw InvalidInputError("classify_map: alpha must be nonnegative");
  }
  MapDecision decision;
  decision.location = location;
  decision.log_posteriors.resize(dict.size());
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int l = 0; l < dict.size(); ++l) {
    const double residual = (y - alpha * (a * dict.target(l))).squaredNorm();
    const double score = -0.5 * residual + std::log(dict.prior(l));
    decision.log_posteriors[l] = score;
    if (score > best_score) {
      best_score = score;
      best = l;
    }
  }
  decision.label = best;
  return decision;
}

ProjectedDictionary::ProjectedDictionary(const Matrix& a,
                                         const Dictionary& dict) {
  if (a.cols() != dict.dim()) {
    throw ShapeError("ProjectedDictionary: dimension mismatch");
  }
  projected_.reserve(dict.size());
  log_priors_.reserve(dict.size());
  for (int l = 0; l < dict.size(); ++l) {
    projected_.push_back(a * dict.target(l));
    log_priors_.push_back(std::log(dict.prior(l)));
  }
}

MapDecision ProjectedDictionary::classify(const Vector& y, double alpha,
                                          int location) const {
  MapDecision decision;
  decision.location = location;
  decision.log_posteriors.resize(projected_.size());
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < projected_.size(); ++l) {
    const double residual = (y - alpha * projected_[l]).squaredNorm();
    const double score = -0.5 * residual + log_priors_[l];
    decision.log_posteriors[l] = score;
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(l);
    }
  }
  decision.label = best;
  return decision;
}

double ProjectedDictionary::statistic(const Vector& y, double alpha) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Vector& p : projected_) {
    best = std::min(best, (y - alpha * p).norm());
  }
  return best;
}

double estimate_alpha_mle(const Vector& y) {
  const double excess =
      y.squaredNorm() - static_cast<double>(y.size());
  return std::sqrt(std::max(excess, 0.0));
}

std::optional<double> empirical_pfdr(std::span<const MapDecision> decisions,
                                     const Scene& scene, int target_j) {
  if (static_cast<int>(decisions.size()) != scene.size()) {
    throw ShapeError("empirical_pfdr: decisions do not cover the scene");
  }
  long long missed = 0;
  long long declared_nontarget = 0;
  for (const MapDecision& d : decisions) {
    if (d.label != target_j) {
      ++declared_nontarget;
      if (scene.labels[d.location] == target_j) ++missed;
    }
  }
  if (declared_nontarget == 0) return std::nullopt;
  return static_cast<double>(missed) / static_cast<double>(declared_nontarget);
}

PfdrReport make_pfdr_report(std::span<const MapDecision> decisions,
                            const Scene& scene, int num_targets) {
  PfdrReport report;
  report.per_target_pfdr.assign(num_targets,
                                std::numeric_limits<double>::quiet_NaN());
  report.missed.assign(num_targets, 0);
  report.declared_nontarget.assign(num_targets, 0);
  for (const MapDecision& d : decisions) {
    for (int j = 0; j < num_targets; ++j) {
      if (d.label != j) {
        ++report.declared_nontarget[j];
        if (scene.labels[d.location] == j) ++report.missed[j];
      }
    }
  }
  for (int j = 0; j < num_targets; ++j) {
    if (report.declared_nontarget[j] > 0) {
      const double value = static_cast<double>(report.missed[j]) /
                           static_cast<double>(report.declared_nontarget[j]);
      report.per_target_pfdr[j] = value;
      if (!report.worst_defined || value > report.worst_case) {
        report.worst_case = value;
        report.worst_defined = true;
      }
    }
  }
  if (!report.worst_defined) {
    report.worst_case = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

double pfdr_bound_from_pe(double pe_max, double p_max) {
  if (pe_max < 0.0 || pe_max > 1.0) {
    throw InvalidInputError("pfdr_bound_from_pe: pe_max must lie in [0, 1]");
  }
  const double denom = 1.0 - p_max - pe_max;
  if (denom <= 0.0) return 1.0;
  return std::min(1.0, pe_max / denom);
}

double pe_bound_gaussian(int k, double alpha, double d_min, double p_min,
                         double sigma2) {
  if (k < 1 || !(p_min > 0.0) || !(sigma2 > 0.0)) {
    throw InvalidInputError("pe_bound_gaussian: invalid parameters");
  }
  const double ratio = (alpha * alpha * d_min * d_min) /
                       (4.0 * static_cast<double>(k) * sigma2);
  const double log_term =
      -0.5 * static_cast<double>(k) * std::log1p(ratio);
  const double value = (1.0 - p_min) / p_min * std::exp(log_term);
  return std::min(value, 1.0);
}

namespace {

// K log(1 + c/(4K)) > 2L, the measurement-count condition with
// c = alpha_min^2 d_min^2 and L the prior log factor.  The left side is
// increasing in K with limit c/4, so the crossing (when feasible) is unique.
bool measurement_bound_holds(double k, double c, double two_l) {
  return k * std::log1p(c / (4.0 * k)) > two_l;
}

}  // namespace

AchievableBound achievable_pfdr_bound(const BoundInputs& inputs,
                                      std::optional<double> lambda_max) {
  if (inputs.k < 1 || inputs.n < 1) {
    throw InvalidInputError("achievable_pfdr_bound: dimensions must be >= 1");
  }
  if (!(inputs.p_min > 0.0) || !(inputs.p_min <= inputs.p_max) ||
      !(inputs.p_max < 1.0)) {
    throw InvalidInputError("achievable_pfdr_bound: priors out of range");
  }
  if (!(inputs.alpha_min > 0.0) || !(inputs.d_min > 0.0)) {
    throw InvalidInputError(
        "achievable_pfdr_bound: alpha_min and d_min must be positive");
  }
  if (!(inputs.epsilon > 0.0) || !(inputs.epsilon < 1.0 - inputs.p_max)) {
    throw InvalidInputError(
        "achievable_pfdr_bound: epsilon must lie in (0, 1 - p_max)");
  }

  const double k = static_cast<double>(inputs.k);
  const double n = static_cast<double>(inputs.n);
  const double eps = inputs.epsilon;
  const double c = inputs.alpha_min * inputs.alpha_min * inputs.d_min *
                   inputs.d_min;
  const double growth = std::exp(0.5 * k * std::log1p(c / (4.0 * k)));
  const double decay = 1.0 / growth;
  const double concentration = 2.0 * std::exp(-0.5 * (k + n) * eps * eps);

  AchievableBound result;

  // Dominant term: prior-weighted misclassification bound inverted through
  // the pFDR relation; the second term accounts for the spectral-norm
  // concentration failure mass.
  const double bracket =
      (1.0 - inputs.p_max) / (1.0 - inputs.p_min) * growth - 1.0 / inputs.p_min;
  double value;
  if (!std::isfinite(growth)) {
    value = 0.0;
  } else if (bracket <= 0.0) {
    value = 1.0;
  } else {
    value = 1.0 / (inputs.p_min * bracket);
  }
  value += (1.0 - inputs.p_max) / (eps * eps) * concentration;
  result.value = std::clamp(value, 0.0, 1.0);

  const double error_mass =
      (1.0 - inputs.p_min) / inputs.p_min * decay + concentration;
  result.conditions.positive_prob =
      1.0 - inputs.p_max - eps >= error_mass;

  result.conditions.lambda_max_threshold =
      1.0 / ((1.0 + eps) * (1.0 + eps) *
             (std::sqrt(n / k) + 1.0) * (std::sqrt(n / k) + 1.0));
  result.conditions.weak_background =
      !lambda_max || *lambda_max < result.conditions.lambda_max_threshold;

  const double two_l = 2.0 * std::log(2.0 * (1.0 - inputs.p_min) /
                                      (inputs.p_min * (1.0 - inputs.p_max)));
  result.conditions.k_bound = measurement_bound_holds(k, c, two_l);

  return result;
}

int min_measurements(double alpha_min, double d_min, double p_min,
                     double p_max) {
  if (!(alpha_min > 0.0) || !(d_min > 0.0)) {
    throw InvalidInputError(
        "min_measurements: alpha_min and d_min must be positive");
  }
  if (!(p_min > 0.0) || !(p_min <= p_max) || !(p_max < 1.0)) {
    throw InvalidInputError("min_measurements: priors out of range");
  }
  const double c = alpha_min * alpha_min * d_min * d_min;
  const double two_l =
      2.0 * std::log(2.0 * (1.0 - p_min) / (p_min * (1.0 - p_max)));
  // K log(1 + c/(4K)) increases toward c/4, so anything at or below that
  // supremum can never be reached.
  if (c / 4.0 <= two_l) {
    throw InfeasibleError(
        "min_measurements: alpha_min * d_min too small for the requested "
        "priors at any K");
  }
  constexpr int kCap = 10000000;
  for (int k = 1; k <= kCap; ++k) {
    if (measurement_bound_holds(static_cast<double>(k), c, two_l)) return k;
  }
  throw InfeasibleError("min_measurements: no K up to 10^7 satisfies the bound");
}

int classify_manifold_two_step(const Vector& y, const Vector& y_tilde,
                               double alpha, const Matrix& a,
                               std::span<const std::vector<Vector>> manifolds) {
  if (manifolds.empty()) {
    throw InvalidInputError("classify_manifold_two_step: no manifolds");
  }
  if (y.size() != a.rows() || y_tilde.size() != a.rows()) {
    throw ShapeError("classify_manifold_two_step: dimension mismatch");
  }
  // Step 1: per manifold, the maximum-likelihood sample given y.
  std::vector<Vector> induced;
  induced.reserve(manifolds.size());
  for (const std::vector<Vector>& manifold : manifolds) {
    if (manifold.empty()) {
      throw InvalidInputError("classify_manifold_two_step: empty manifold");
    }
    const Vector* best = nullptr;
    double best_residual = std::numeric_limits<double>::infinity();
    for (const Vector& f : manifold) {
      const double residual = (y - alpha * (a * f)).squaredNorm();
      if (residual < best_residual) {
        best_residual = residual;
        best = &f;
      }
    }
    induced.push_back(*best);
  }
  // Step 2: equal-prior MAP over the induced dictionary using y_tilde.
  int label = 0;
  double best_residual = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < induced.size(); ++l) {
    const double residual =
        (y_tilde - alpha * (a * induced[l])).squaredNorm();
    if (residual < best_residual) {
      best_residual = residual;
      label = static_cast<int>(l);
    }
  }
  return label;
}

}  // namespace cdetect
