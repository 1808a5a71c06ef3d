#ifndef CDETECT_SENSING_HPP
#define CDETECT_SENSING_HPP

#include <optional>
#include <span>
#include <vector>

#include "cdetect/model.hpp"
#include "cdetect/numerics.hpp"
#include "cdetect/rng.hpp"

namespace cdetect {

enum class PlanKind { kDesigned, kRandomPhi, kIdentity };

struct BackgroundTolerance {
  bool ok = false;
  double lambda_max = 0.0;
  double threshold = 0.0;  // 1 / |A|^2
};

// The background is tolerable for sensing matrix `a` when its largest
// covariance eigenvalue stays below 1 / |a|^2.
BackgroundTolerance check_background_tolerance(const Matrix& a,
                                               const BackgroundModel& bg);

// Measurement design: projection Phi, whitening filter C, and the effective
// whitened operator A = C * Phi.  For designed plans A is the requested
// matrix and the noise seen after whitening is exactly N(0, I).
class SensingPlan {
 public:
  // Phi = sigma * (I - A Sigma_b A^T)^{-1/2} * A.  Requires the background
  // tolerance check to pass; throws BackgroundToleranceError otherwise and
  // NotPositiveDefiniteError when the inner matrix fails numerically.
  static SensingPlan designed(const Matrix& a, const BackgroundModel& bg);

  // Phi with i.i.d. N(0, 1/K) entries and the whitening filter computed the
  // same way; the effective operator C * Phi carries no distance guarantee.
  static SensingPlan random_phi(Eigen::Index k, const BackgroundModel& bg,
                                RngStream stream);

  // Phi = A = C = I with K = N; a direct-observation plan for oracle tests.
  static SensingPlan identity(const BackgroundModel& bg);

  const Matrix& a() const { return a_; }
  const Matrix& phi() const { return phi_; }
  const Matrix& whitener() const { return whitener_; }
  const BackgroundModel& background() const { return background_; }
  PlanKind kind() const { return kind_; }
  Eigen::Index k() const { return phi_.rows(); }
  Eigen::Index n() const { return phi_.cols(); }

  std::optional<double> epsilon() const { return epsilon_; }
  void set_epsilon(double epsilon) { epsilon_ = epsilon; }

 private:
  SensingPlan(Matrix a, Matrix phi, Matrix whitener, BackgroundModel bg,
              PlanKind kind);

  Matrix a_;
  Matrix phi_;
  Matrix whitener_;
  BackgroundModel background_;
  PlanKind kind_;
  std::optional<double> epsilon_;
};

// y = C * (z - Phi * mu_b).
Vector whiten(const SensingPlan& plan, const Vector& z, const Vector& mu_b);

struct DistanceCheck {
  bool ok = false;
  double worst_ratio_low = 1.0;   // min over pairs of |A(u-v)| / |u-v|
  double worst_ratio_high = 1.0;  // max over pairs
};

// Checks (1-eps)|u-v| <= |A(u-v)| <= (1+eps)|u-v| over all pairs of `points`.
DistanceCheck verify_distance_preservation(const Matrix& a,
                                           std::span<const Vector> points,
                                           double epsilon);

}  // namespace cdetect

#endif  // CDETECT_SENSING_HPP
