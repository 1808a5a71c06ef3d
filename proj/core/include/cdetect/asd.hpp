#ifndef CDETECT_ASD_HPP
#define CDETECT_ASD_HPP

#include <span>
#include <vector>

#include "cdetect/model.hpp"
#include "cdetect/numerics.hpp"
#include "cdetect/sensing.hpp"

namespace cdetect {

// Per-location anomaly test record.
struct AnomalyTest {
  int location = 0;
  double statistic = 0.0;     // min over the dictionary of |y - alpha A f|
  double pvalue_bound = 1.0;  // upper bound on the p-value
  double tau = 0.0;
  double zeta = 0.0;
  double alpha_used = 0.0;
};

// min_f |y - alpha A f| over the dictionary.
double anomaly_statistic(const Vector& y, double alpha, const Matrix& a,
                         const Dictionary& dict);

// 1 - F(d^2; K, (1+eps)^2 alpha_hat^2 (zeta + tau)^2) with F the noncentral
// chi-squared CDF: a p-value upper bound valid whenever the sensing operator
// preserves distances to within eps and |alpha/alpha_hat - 1| <= zeta.
double pvalue_upper_bound(double d, int k, double alpha_hat, double tau,
                          double epsilon, double zeta);

struct BhOutcome {
  double delta = 0.0;
  int threshold_index = 0;    // t, 0 when nothing is rejected
  double p_threshold = 0.0;   // p_(t), 0 when nothing is rejected
  std::vector<int> rejected;  // ascending location indices
};

// Step-up procedure: sort p-values ascending (stable), find the largest i
// with p_(i) <= i * delta / M, reject those i locations.
BhOutcome bh_procedure(std::span<const double> pvalues, double delta);

// Signal strengths either known per location or estimated from |y|^2 with a
// stated multiplicative accuracy zeta.
class AlphaMode {
 public:
  static AlphaMode known(std::vector<double> alphas);
  static AlphaMode estimate(double zeta);

  bool is_known() const { return known_; }
  double zeta() const { return zeta_; }
  const std::vector<double>& alphas() const { return alphas_; }

 private:
  AlphaMode() = default;
  bool known_ = false;
  double zeta_ = 0.0;
  std::vector<double> alphas_;
};

struct DetectionReport {
  std::vector<AnomalyTest> tests;
  BhOutcome outcome;
  int k = 0;
  double tau = 0.0;
  double epsilon = 0.0;
};

// Full pipeline: statistic, p-value upper bound, and BH rejection per
// location.  Rejected locations are the declared anomalies.
DetectionReport run_asd(const ObservationSet& obs, const SensingPlan& plan,
                        const Dictionary& dict, double tau, double epsilon,
                        double delta, const AlphaMode& alpha_mode);

// Empirical error rates of a rejection set against ground truth; every
// 0/0 ratio is defined as 0.
struct Rates {
  double fdr = 0.0;
  double fnr = 0.0;
  double pd = 0.0;
  double pf = 0.0;
  long long false_discoveries = 0;  // V
  long long rejections = 0;         // R
};

Rates empirical_rates(const DetectionReport& report, const Scene& scene);

// Rates for an explicit rejection mask (used by threshold sweeps).
Rates rates_from_rejections(std::span<const char> rejected,
                            const Scene& scene);

// Rejection mask for the rule "anomalous iff statistic >= eta".
std::vector<char> threshold_rejections(std::span<const double> statistics,
                                       double eta);

}  // namespace cdetect

#endif  // CDETECT_ASD_HPP
