#ifndef CDETECT_BASELINES_HPP
#define CDETECT_BASELINES_HPP

#include "cdetect/model.hpp"
#include "cdetect/numerics.hpp"

namespace cdetect {

// Block-sum downsampling from R^N to R^K with block length ceil(N/K); the
// trailing block is zero-padded.  `scale` is the SNR-matching divisor
// applied to measurements (the detectors fold it into alpha instead).
struct DownsamplePlan {
  Eigen::Index n = 0;
  Eigen::Index k = 0;
  Eigen::Index block = 1;
  double scale = 1.0;

  static DownsamplePlan make(Eigen::Index n, Eigen::Index k,
                             double scale = 1.0);
};

Vector downsample(const Vector& g, const DownsamplePlan& plan);

// Mahalanobis MAP over the downsampled dictionary:
// argmin_l (y - alpha g_l)' G^{-1} (y - alpha g_l) / 2 - log p_l with
// g_l the block-sum of target l.  Ties break toward the lowest index.
int classify_map_downsampled(const Vector& y, double alpha,
                             const Dictionary& dict, const Matrix& g_cov);

// Negative log-likelihood of y under the equal-mixture Gaussian null with
// component means alpha g_l and shared covariance G, computed with
// log-sum-exp stabilization.  Larger scores are more anomalous.
double glrt_anomaly_score(const Vector& y, double alpha,
                          const Dictionary& dict, const Matrix& g_cov);

// SNR-matching divisor: sqrt of the ratio between the mean per-coordinate
// signal energy of downsampled targets and of projected targets.
double snr_matching_scale(const Dictionary& dict, const Matrix& phi,
                          const DownsamplePlan& plan);

// Factors the covariance and downsamples the targets once; classify() and
// score() match classify_map_downsampled / glrt_anomaly_score exactly.
class DownsampledMixture {
 public:
  DownsampledMixture(const Dictionary& dict, Eigen::Index k,
                     const Matrix& g_cov);

  int classify(const Vector& y, double alpha) const;
  double score(const Vector& y, double alpha) const;

 private:
  std::vector<Vector> means_;       // unit-strength downsampled targets
  std::vector<double> log_priors_;
  Eigen::LLT<Matrix> chol_;
  double log_det_ = 0.0;
  Eigen::Index k_ = 0;
};

}  // namespace cdetect

#endif  // CDETECT_BASELINES_HPP
