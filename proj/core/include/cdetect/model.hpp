#ifndef CDETECT_MODEL_HPP
#define CDETECT_MODEL_HPP

#include <optional>
#include <vector>

#include "cdetect/numerics.hpp"
#include "cdetect/rng.hpp"

namespace cdetect {

class SensingPlan;

inline constexpr double kUnitNormTol = 1e-9;
inline constexpr double kPriorSumTol = 1e-12;

// Library of candidate targets with their prior probabilities.  Targets are
// unit-norm vectors in R^N; priors are strictly positive and sum to one.
class Dictionary {
 public:
  Dictionary(std::vector<Vector> targets, std::vector<double> priors);

  int size() const { return static_cast<int>(targets_.size()); }
  Eigen::Index dim() const { return targets_.empty() ? 0 : targets_[0].size(); }
  const Vector& target(int j) const { return targets_.at(j); }
  double prior(int j) const { return priors_.at(j); }
  const std::vector<Vector>& targets() const { return targets_; }
  const std::vector<double>& priors() const { return priors_; }

 private:
  std::vector<Vector> targets_;
  std::vector<double> priors_;
};

struct DictionaryStats {
  double d_min = 0.0;  // smallest pairwise target distance
  double p_min = 0.0;
  double p_max = 0.0;
};

// Exhaustive pairwise scan; requires at least two targets.
DictionaryStats make_dictionary_stats(const Dictionary& dict);

// Colored Gaussian background plus white sensor noise.  The covariance must
// be symmetric positive semidefinite; its largest eigenvalue and a sampling
// factor are cached at construction.
class BackgroundModel {
 public:
  BackgroundModel(Vector mean, Matrix covariance, double sensor_variance);

  static BackgroundModel zero(Eigen::Index n, double sensor_variance);

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  double sensor_variance() const { return sensor_variance_; }
  double sigma() const { return sigma_; }
  double lambda_max() const { return lambda_max_; }
  // Symmetric factor S with S*S = covariance, used to draw samples.
  const Matrix& covariance_sqrt() const { return covariance_sqrt_; }

 private:
  Vector mean_;
  Matrix covariance_;
  double sensor_variance_;
  double sigma_;
  double lambda_max_;
  Matrix covariance_sqrt_;
};

// Distribution of per-location signal strengths.
struct AlphaLaw {
  enum class Kind { kConstant, kUniform, kUniformSqrtK };

  Kind kind = Kind::kConstant;
  double lo = 0.0;
  double hi = 0.0;
  int k = 0;  // measurement count used by kUniformSqrtK scaling

  static AlphaLaw constant(double value);
  static AlphaLaw uniform(double lo, double hi);
  // alpha = sqrt(k) * U[lo, hi]; models signal energy growing with the
  // number of detectors.
  static AlphaLaw uniform_sqrt_k(double lo, double hi, int k);

  double sample(Sampler& sampler) const;
};

struct AnomalySpec {
  Vector signal;  // unit-norm
  int count = 0;
};

// Ground truth for M locations: a dictionary label per location (or the
// anomaly marker), the true signal, and its strength.
struct Scene {
  static constexpr int kAnomalousLabel = -1;

  std::vector<int> labels;
  std::vector<Vector> true_signals;
  std::vector<double> alphas;
  std::vector<char> anomaly_mask;

  int size() const { return static_cast<int>(labels.size()); }
  double alpha_min() const;
  int anomaly_count() const;
};

// Draws labels i.i.d. from the dictionary priors, places `anomaly->count`
// anomalous locations uniformly at random, and samples strengths from the
// alpha law.
Scene generate_scene(const Dictionary& dict, int locations,
                     const AlphaLaw& alpha_law,
                     const std::optional<AnomalySpec>& anomaly,
                     RngStream stream);

struct ObservationSet {
  std::vector<Vector> raw;       // z_i in R^K
  std::vector<Vector> whitened;  // y_i in R^K
  std::optional<std::vector<double>> alpha_estimates;

  int size() const { return static_cast<int>(raw.size()); }
};

// Simulates z_i = Phi (alpha_i f*_i + b_i) + w_i per location and whitens
// through the plan.  Location i uses the substream keyed by i, so any subset
// of locations regenerates identically.
ObservationSet generate_observations(const Scene& scene,
                                     const SensingPlan& plan,
                                     RngStream stream);

// Builders for synthetic inputs. ---------------------------------------

// m unit-norm targets in R^n whose minimum pairwise distance is exactly
// `d_min` (one deliberately close pair; the rest are random and far apart).
// When `close_pair_direction` is given, the close pair differs along that
// direction (after orthogonalization against the first target).
Dictionary synthetic_dictionary(int m, Eigen::Index n, double d_min,
                                std::vector<double> priors, RngStream stream,
                                const std::optional<Vector>&
                                    close_pair_direction = {});

// Unit-norm vector at minimum distance `distance` from the dictionary,
// reached by rotating the first target toward `direction`.
Vector anomaly_at_distance(const Dictionary& dict, double distance,
                           const Vector& direction);

// Unit-norm alternating +/- pattern; its block sums vanish for any even
// block length, which makes differences along it invisible to block-sum
// downsampling.
Vector fine_pattern(Eigen::Index n);

}  // namespace cdetect

#endif  // CDETECT_MODEL_HPP
