#include "cdetect/asd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cdetect/dsd.hpp"
#include "cdetect/errors.hpp"

namespace cdetect {

double anomaly_statistic(const Vector& y, double alpha, const Matrix& a,
                         const Dictionary& dict) {
  if (dict.size() < 1) {
    throw InvalidInputError("anomaly_statistic: empty dictionary");
  }
  if (a.cols() != dict.dim() || a.rows() != y.size()) {
    throw ShapeError("anomaly_statistic: dimension mismatch");
  }
  if (alpha < 0.0) {
    throw InvalidInputError("anomaly_statistic: alpha must be nonnegative");
  }
  double best = std::numeric_limits<double>::infinity();
  for (const Vector& f : dict.targets()) {
    best = std::min(best, (y - alpha * (a * f)).norm());
  }
  return best;
}

double pvalue_upper_bound(double d, int k, double alpha_hat, double tau,
                          double epsilon, double zeta) {
  if (!(d >= 0.0)) {
    throw InvalidInputError("pvalue_upper_bound: statistic must be >= 0");
  }
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) {
    throw InvalidInputError("pvalue_upper_bound: epsilon must lie in (0, 1)");
  }
  if (zeta < 0.0 || zeta > 1.0) {
    throw InvalidInputError("pvalue_upper_bound: zeta must lie in [0, 1]");
  }
  if (tau < 0.0 || tau >= std::sqrt(2.0)) {
    throw InvalidInputError(
        "pvalue_upper_bound: tau must lie in [0, sqrt(2))");
  }
  if (alpha_hat < 0.0) {
    throw InvalidInputError("pvalue_upper_bound: alpha_hat must be >= 0");
  }
  const double shift = (1.0 + epsilon) * alpha_hat * (zeta + tau);
  const double nc = shift * shift;
  return 1.0 - noncentral_chisq_cdf(d * d, k, nc);
}

BhOutcome bh_procedure(std::span<const double> pvalues, double delta) {
  const int m = static_cast<int>(pvalues.size());
  if (m < 1) throw InvalidInputError("bh_procedure: need at least one p-value");
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw InvalidInputError("bh_procedure: delta must lie in (0, 1)");
  }
  for (double p : pvalues) {
    if (!(p >= 0.0) || !(p <= 1.0)) {
      throw InvalidInputError("bh_procedure: p-values must lie in [0, 1]");
    }
  }
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int lhs, int rhs) { return pvalues[lhs] < pvalues[rhs]; });
  BhOutcome outcome;
  outcome.delta = delta;
  int t = 0;
  for (int i = 1; i <= m; ++i) {
    if (pvalues[order[i - 1]] <=
        static_cast<double>(i) * delta / static_cast<double>(m)) {
      t = i;
    }
  }
  outcome.threshold_index = t;
  if (t == 0) return outcome;
  outcome.p_threshold = pvalues[order[t - 1]];
  outcome.rejected.assign(order.begin(), order.begin() + t);
  std::sort(outcome.rejected.begin(), outcome.rejected.end());
  return outcome;
}

AlphaMode AlphaMode::known(std::vector<double> alphas) {
  AlphaMode mode;
  mode.known_ = true;
  mode.alphas_ = std::move(alphas);
  return mode;
}

AlphaMode AlphaMode::estimate(double zeta) {
  if (zeta < 0.0 || zeta > 1.0) {
    throw InvalidInputError("AlphaMode: zeta must lie in [0, 1]");
  }
  AlphaMode mode;
  mode.known_ = false;
  mode.zeta_ = zeta;
  return mode;
}

DetectionReport run_asd(const ObservationSet& obs, const SensingPlan& plan,
                        const Dictionary& dict, double tau, double epsilon,
                        double delta, const AlphaMode& alpha_mode) {
  const int m = obs.size();
  if (alpha_mode.is_known() &&
      static_cast<int>(alpha_mode.alphas().size()) != m) {
    throw ShapeError("run_asd: known alphas do not cover the observations");
  }
  DetectionReport report;
  report.k = static_cast<int>(plan.k());
  report.tau = tau;
  report.epsilon = epsilon;
  report.tests.resize(m);

  std::vector<double> pvalues(m);
  const double zeta = alpha_mode.is_known() ? 0.0 : alpha_mode.zeta();
  for (int i = 0; i < m; ++i) {
    const Vector& y = obs.whitened[i];
    const double alpha = alpha_mode.is_known() ? alpha_mode.alphas()[i]
                                               : estimate_alpha_mle(y);
    AnomalyTest& test = report.tests[i];
    test.location = i;
    test.alpha_used = alpha;
    test.tau = tau;
    test.zeta = zeta;
    test.statistic = anomaly_statistic(y, alpha, plan.a(), dict);
    test.pvalue_bound = pvalue_upper_bound(test.statistic, report.k, alpha,
                                           tau, epsilon, zeta);
    pvalues[i] = test.pvalue_bound;
  }
  report.outcome = bh_procedure(pvalues, delta);
  return report;
}

Rates rates_from_rejections(std::span<const char> rejected,
                            const Scene& scene) {
  if (static_cast<int>(rejected.size()) != scene.size()) {
    throw ShapeError("rates_from_rejections: mask does not cover the scene");
  }
  long long rejected_null = 0, rejected_anom = 0;
  long long kept_null = 0, kept_anom = 0;
  for (int i = 0; i < scene.size(); ++i) {
    const bool anom = scene.anomaly_mask[i] != 0;
    if (rejected[i]) {
      (anom ? rejected_anom : rejected_null)++;
    } else {
      (anom ? kept_anom : kept_null)++;
    }
  }
  const auto ratio = [](long long num, long long den) {
    return den == 0 ? 0.0
                    : static_cast<double>(num) / static_cast<double>(den);
  };
  Rates rates;
  rates.false_discoveries = rejected_null;
  rates.rejections = rejected_null + rejected_anom;
  rates.fdr = ratio(rejected_null, rates.rejections);
  rates.fnr = ratio(kept_anom, kept_null + kept_anom);
  rates.pd = ratio(rejected_anom, rejected_anom + kept_anom);
  rates.pf = ratio(rejected_null, rejected_null + kept_null);
  return rates;
}

Rates empirical_rates(const DetectionReport& report, const Scene& scene) {
  if (static_cast<int>(report.tests.size()) != scene.size()) {
    throw ShapeError("empirical_rates: report does not cover the scene");
  }
  std::vector<char> mask(scene.size(), 0);
  for (int loc : report.outcome.rejected) mask.at(loc) = 1;
  return rates_from_rejections(mask, scene);
}

std::vector<char> threshold_rejections(std::span<const double> statistics,
                                       double eta) {
  std::vector<char> mask(statistics.size(), 0);
  for (std::size_t i = 0; i < statistics.size(); ++i) {
    mask[i] = statistics[i] >= eta ? 1 : 0;
  }
  return mask;
}

}  // namespace cdetect
