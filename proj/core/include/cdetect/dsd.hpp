#ifndef CDETECT_DSD_HPP
#define CDETECT_DSD_HPP

#include <optional>
#include <span>
#include <vector>

#include "cdetect/model.hpp"
#include "cdetect/numerics.hpp"

namespace cdetect {

// Outcome of MAP classification at one location.  `label` is the argmax of
// the log posteriors; ties break toward the lowest index.
struct MapDecision {
  int location = 0;
  int label = 0;
  std::vector<double> log_posteriors;
};

// log_posteriors[l] = -|y - alpha A f^(l)|^2 / 2 + log p^(l) (additive
// constant dropped).
MapDecision classify_map(const Vector& y, double alpha, const Matrix& a,
                         const Dictionary& dict, int location = 0);

// Precomputed A f^(l) for batch classification; classify() matches
// classify_map exactly and statistic() matches anomaly_statistic exactly.
class ProjectedDictionary {
 public:
  ProjectedDictionary(const Matrix& a, const Dictionary& dict);

  int size() const { return static_cast<int>(projected_.size()); }
  const Vector& projected(int l) const { return projected_.at(l); }

  MapDecision classify(const Vector& y, double alpha, int location = 0) const;
  double statistic(const Vector& y, double alpha) const;

 private:
  std::vector<Vector> projected_;
  std::vector<double> log_priors_;
};

// sqrt(max(|y|^2 - K, 0)): ML strength estimate under an N(0, 1/K) sensing
// matrix, clamped at zero.
double estimate_alpha_mle(const Vector& y);

// Missed-target fraction among locations declared nontarget for `target_j`;
// empty when nothing was declared nontarget.
std::optional<double> empirical_pfdr(std::span<const MapDecision> decisions,
                                     const Scene& scene, int target_j);

// Per-target empirical rates with the raw counts behind them.  Undefined
// ratios (no declared nontargets) are stored as NaN and excluded from
// `worst_case`.
struct PfdrReport {
  std::vector<double> per_target_pfdr;
  std::vector<int> missed;
  std::vector<int> declared_nontarget;
  double worst_case = 0.0;
  bool worst_defined = false;
};

PfdrReport make_pfdr_report(std::span<const MapDecision> decisions,
                            const Scene& scene, int num_targets);

// min(1, pe / (1 - p_max - pe)); clamps to 1 when the denominator is not
// positive.
double pfdr_bound_from_pe(double pe_max, double p_max);

// Misclassification bound for a Gaussian sensing matrix:
// (1 - p_min)/p_min * (1 + alpha^2 d_min^2 / (4 K sigma^2))^(-K/2),
// clamped to 1.
double pe_bound_gaussian(int k, double alpha, double d_min, double p_min,
                         double sigma2);

struct BoundInputs {
  int k = 0;
  int n = 0;
  double alpha_min = 0.0;
  double d_min = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double epsilon = 0.1;  // concentration slack parameter, in (0, 1 - p_max)
};

struct BoundConditions {
  bool positive_prob = false;     // error mass leaves room below 1 - p_max - eps
  bool weak_background = false;   // lambda_max below the sensing threshold
  bool k_bound = false;           // K clears the self-referential lower bound
  double lambda_max_threshold = 0.0;
};

struct AchievableBound {
  double value = 1.0;  // clamped to [0, 1]
  BoundConditions conditions;
};

// Worst-case pFDR bound achievable with a suitable sensing matrix, plus the
// validity conditions.  `lambda_max`, when provided, is checked against the
// background threshold; otherwise weak_background reports the threshold only.
AchievableBound achievable_pfdr_bound(const BoundInputs& inputs,
                                      std::optional<double> lambda_max = {});

// Smallest K whose self-referential measurement bound holds; ascending scan
// capped at 10^7 (InfeasibleError beyond).
int min_measurements(double alpha_min, double d_min, double p_min,
                     double p_max);

// Two-step classification against finite manifold samples: pick the nearest
// sample per manifold using y, then MAP with equal priors on the induced
// dictionary using the second observation y_tilde.
int classify_manifold_two_step(const Vector& y, const Vector& y_tilde,
                               double alpha, const Matrix& a,
                               std::span<const std::vector<Vector>> manifolds);

}  // namespace cdetect

#endif  // CDETECT_DSD_HPP
