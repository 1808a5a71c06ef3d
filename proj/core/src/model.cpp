#include "cdetect/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cdetect/errors.hpp"
#include "cdetect/sensing.hpp"

namespace cdetect {

Dictionary::Dictionary(std::vector<Vector> targets, std::vector<double> priors)
    : targets_(std::move(targets)), priors_(std::move(priors)) {
  if (targets_.empty()) {
    throw InvalidInputError("Dictionary: no targets");
  }
  if (targets_.size() != priors_.size()) {
    throw InvalidInputError("Dictionary: targets/priors size mismatch");
  }
  const Eigen::Index n = targets_[0].size();
  double prior_sum = 0.0;
  for (std::size_t j = 0; j < targets_.size(); ++j) {
    if (targets_[j].size() != n) {
      throw ShapeError("Dictionary: targets have inconsistent dimensions");
    }
    if (!targets_[j].allFinite()) {
      throw InvalidInputError("Dictionary: non-finite target entries");
    }
    if (std::abs(targets_[j].norm() - 1.0) > kUnitNormTol) {
      std::ostringstream msg;
      msg << "Dictionary: target " << j << " is not unit-norm (|f| = "
          << targets_[j].norm() << ")";
      throw InvalidInputError(msg.str());
    }
    if (!(priors_[j] > 0.0)) {
      throw InvalidInputError("Dictionary: priors must be strictly positive");
    }
    prior_sum += priors_[j];
  }
  if (std::abs(prior_sum - 1.0) > kPriorSumTol) {
    std::ostringstream msg;
    msg << "Dictionary: priors sum to " << prior_sum << ", expected 1";
    throw InvalidInputError(msg.str());
  }
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    for (std::size_t j = i + 1; j < targets_.size(); ++j) {
      if ((targets_[i] - targets_[j]).norm() == 0.0) {
        throw InvalidInputError("Dictionary: duplicate targets");
      }
    }
  }
}

DictionaryStats make_dictionary_stats(const Dictionary& dict) {
  if (dict.size() < 2) {
    throw InvalidInputError(
        "make_dictionary_stats: need at least two targets");
  }
  DictionaryStats stats;
  stats.d_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dict.size(); ++i) {
    for (int j = i + 1; j < dict.size(); ++j) {
      stats.d_min =
          std::min(stats.d_min, (dict.target(i) - dict.target(j)).norm());
    }
  }
  const auto [lo, hi] =
      std::minmax_element(dict.priors().begin(), dict.priors().end());
  stats.p_min = *lo;
  stats.p_max = *hi;
  return stats;
}

BackgroundModel::BackgroundModel(Vector mean, Matrix covariance,
                                 double sensor_variance)
    : mean_(std::move(mean)),
      covariance_(std::move(covariance)),
      sensor_variance_(sensor_variance) {
  if (!(sensor_variance_ > 0.0) || !std::isfinite(sensor_variance_)) {
    throw InvalidInputError(
        "BackgroundModel: sensor variance must be positive");
  }
  sigma_ = std::sqrt(sensor_variance_);
  if (covariance_.rows() != mean_.size() ||
      covariance_.cols() != mean_.size()) {
    throw ShapeError("BackgroundModel: covariance/mean dimension mismatch");
  }
  require_symmetric(covariance_, "BackgroundModel");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance_);
  if (eig.info() != Eigen::Success) {
    throw InvalidInputError("BackgroundModel: eigendecomposition failed");
  }
  const Vector& values = eig.eigenvalues();
  lambda_max_ = values.maxCoeff();
  const double tol = 1e-10 * std::max(lambda_max_, 0.0) + 1e-300;
  if (values.minCoeff() < -tol) {
    throw NotPositiveDefiniteError(
        "BackgroundModel: covariance is not positive semidefinite",
        values.minCoeff());
  }
  const Vector roots = values.array().max(0.0).sqrt();
  covariance_sqrt_ =
      eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
  covariance_sqrt_ = 0.5 * (covariance_sqrt_ + covariance_sqrt_.transpose());
}

BackgroundModel BackgroundModel::zero(Eigen::Index n, double sensor_variance) {
  return BackgroundModel(Vector::Zero(n), Matrix::Zero(n, n),
                         sensor_variance);
}

AlphaLaw AlphaLaw::constant(double value) {
  AlphaLaw law;
  law.kind = Kind::kConstant;
  law.lo = law.hi = value;
  return law;
}

AlphaLaw AlphaLaw::uniform(double lo, double hi) {
  AlphaLaw law;
  law.kind = Kind::kUniform;
  law.lo = lo;
  law.hi = hi;
  return law;
}

AlphaLaw AlphaLaw::uniform_sqrt_k(double lo, double hi, int k) {
  if (k < 1) throw InvalidInputError("AlphaLaw: k must be positive");
  AlphaLaw law;
  law.kind = Kind::kUniformSqrtK;
  law.lo = lo;
  law.hi = hi;
  law.k = k;
  return law;
}

double AlphaLaw::sample(Sampler& sampler) const {
  switch (kind) {
    case Kind::kConstant:
      return lo;
    case Kind::kUniform:
      return sampler.uniform(lo, hi);
    case Kind::kUniformSqrtK:
      return std::sqrt(static_cast<double>(k)) * sampler.uniform(lo, hi);
  }
  return lo;
}

double Scene::alpha_min() const {
  double lo = std::numeric_limits<double>::infinity();
  for (double a : alphas) lo = std::min(lo, a);
  return lo;
}

int Scene::anomaly_count() const {
  return static_cast<int>(
      std::count(anomaly_mask.begin(), anomaly_mask.end(), char(1)));
}

Scene generate_scene(const Dictionary& dict, int locations,
                     const AlphaLaw& alpha_law,
                     const std::optional<AnomalySpec>& anomaly,
                     RngStream stream) {
  if (locations < 1) {
    throw InvalidInputError("generate_scene: need at least one location");
  }
  if (anomaly) {
    if (anomaly->count < 0 || anomaly->count > locations) {
      throw InvalidInputError("generate_scene: anomaly count out of range");
    }
    if (anomaly->signal.size() != dict.dim()) {
      throw ShapeError("generate_scene: anomaly signal dimension mismatch");
    }
    if (std::abs(anomaly->signal.norm() - 1.0) > kUnitNormTol) {
      throw InvalidInputError("generate_scene: anomaly signal not unit-norm");
    }
  }

  Scene scene;
  scene.labels.resize(locations);
  scene.true_signals.resize(locations);
  scene.alphas.resize(locations);
  scene.anomaly_mask.assign(locations, 0);

  Sampler sampler(stream.sub(0));

  // Anomalous slots: partial Fisher-Yates over location indices.
  if (anomaly && anomaly->count > 0) {
    std::vector<int> order(locations);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < anomaly->count; ++i) {
      const int j =
          i + static_cast<int>(sampler.next_bits() %
                               static_cast<std::uint64_t>(locations - i));
      std::swap(order[i], order[j]);
      scene.anomaly_mask[order[i]] = 1;
    }
  }

  // Cumulative prior table for label draws.
  std::vector<double> cumulative(dict.size());
  std::partial_sum(dict.priors().begin(), dict.priors().end(),
                   cumulative.begin());
  cumulative.back() = 1.0;

  for (int i = 0; i < locations; ++i) {
    if (scene.anomaly_mask[i]) {
      scene.labels[i] = Scene::kAnomalousLabel;
      scene.true_signals[i] = anomaly->signal;
    } else {
      const double u = sampler.uniform();
      const int label = static_cast<int>(
          std::lower_bound(cumulative.begin(), cumulative.end(), u) -
          cumulative.begin());
      scene.labels[i] = std::min(label, dict.size() - 1);
      scene.true_signals[i] = dict.target(scene.labels[i]);
    }
    scene.alphas[i] = alpha_law.sample(sampler);
  }
  return scene;
}

ObservationSet generate_observations(const Scene& scene,
                                     const SensingPlan& plan,
                                     RngStream stream) {
  const Eigen::Index n = plan.n();
  const Eigen::Index k = plan.k();
  const BackgroundModel& bg = plan.background();
  if (!scene.true_signals.empty() && scene.true_signals[0].size() != n) {
    throw ShapeError("generate_observations: scene/plan dimension mismatch");
  }

  ObservationSet obs;
  obs.raw.resize(scene.size());
  obs.whitened.resize(scene.size());

  const bool colored = bg.lambda_max() > 0.0;
  for (int i = 0; i < scene.size(); ++i) {
    Sampler sampler(stream.sub(static_cast<std::uint64_t>(i)));
    Vector signal = scene.alphas[i] * scene.true_signals[i];
    if (colored) {
      signal += bg.covariance_sqrt() * standard_normal_vector(n, sampler);
    } else {
      // Keep the draw sequence aligned between colored and zero backgrounds.
      standard_normal_vector(n, sampler);
    }
    signal += bg.mean();
    Vector z = plan.phi() * signal;
    z += bg.sigma() * standard_normal_vector(k, sampler);
    obs.whitened[i] = whiten(plan, z, bg.mean());
    obs.raw[i] = std::move(z);
  }
  return obs;
}

Dictionary synthetic_dictionary(int m, Eigen::Index n, double d_min,
                                std::vector<double> priors, RngStream stream,
                                const std::optional<Vector>&
                                    close_pair_direction) {
  if (m < 2) throw InvalidInputError("synthetic_dictionary: need m >= 2");
  if (n < m) throw InvalidInputError("synthetic_dictionary: need n >= m");
  if (!(d_min > 0.0) || d_min >= 1.0) {
    throw InvalidInputError(
        "synthetic_dictionary: d_min must lie in (0, 1) so the close pair "
        "is the unique minimizer");
  }
  if (priors.size() != static_cast<std::size_t>(m)) {
    throw InvalidInputError("synthetic_dictionary: priors size mismatch");
  }

  // Every non-engineered pair must clear d_min so the close pair below is
  // the unique minimizer; random unit vectors concentrate near sqrt(2).
  const double separation_floor = std::min(1.2, d_min + 0.1);
  Sampler sampler(stream.sub(0));
  std::vector<Vector> targets(m);
  for (int j = 0; j < m; ++j) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 256) {
        throw InfeasibleError("synthetic_dictionary: could not separate");
      }
      Vector v = standard_normal_vector(n, sampler);
      v.normalize();
      bool separated = true;
      for (int i = 0; i < j; ++i) {
        if ((targets[i] - v).norm() <= separation_floor) {
          separated = false;
          break;
        }
      }
      if (separated) {
        targets[j] = std::move(v);
        break;
      }
    }
  }

  // Rotate target 1 next to target 0 so the pair distance is exactly d_min:
  // chord d corresponds to angle 2*asin(d/2) on the unit sphere.
  Vector direction;
  if (close_pair_direction) {
    direction = *close_pair_direction;
  } else {
    direction = targets[1];
  }
  direction -= direction.dot(targets[0]) * targets[0];
  const double dir_norm = direction.norm();
  if (dir_norm < 1e-8) {
    throw InvalidInputError(
        "synthetic_dictionary: close-pair direction is collinear with the "
        "first target");
  }
  direction /= dir_norm;
  const double theta = 2.0 * std::asin(0.5 * d_min);
  targets[1] = std::cos(theta) * targets[0] + std::sin(theta) * direction;
  targets[1].normalize();

  // The rotated target can land near another one for adversarial
  // directions; verify the advertised minimum before returning.
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const bool engineered = i == 0 && j == 1;
      const double dist = (targets[i] - targets[j]).norm();
      if (!engineered && dist <= d_min + 1e-9) {
        throw InfeasibleError(
            "synthetic_dictionary: close pair is not the unique minimizer");
      }
    }
  }
  if (std::abs((targets[0] - targets[1]).norm() - d_min) > 1e-9) {
    throw InfeasibleError("synthetic_dictionary: missed the pair distance");
  }

  return Dictionary(std::move(targets), std::move(priors));
}

Vector anomaly_at_distance(const Dictionary& dict, double distance,
                           const Vector& direction) {
  if (!(distance > 0.0) || distance >= std::sqrt(2.0)) {
    throw InvalidInputError(
        "anomaly_at_distance: distance must lie in (0, sqrt(2))");
  }
  if (direction.size() != dict.dim()) {
    throw ShapeError("anomaly_at_distance: direction dimension mismatch");
  }
  const Vector& base = dict.target(0);
  Vector u = direction - direction.dot(base) * base;
  const double u_norm = u.norm();
  if (u_norm < 1e-10) {
    throw InvalidInputError(
        "anomaly_at_distance: direction collinear with first target");
  }
  u /= u_norm;

  const auto min_distance = [&](double theta) {
    const Vector candidate =
        (std::cos(theta) * base + std::sin(theta) * u).normalized();
    double lo = std::numeric_limits<double>::infinity();
    for (const Vector& f : dict.targets()) {
      lo = std::min(lo, (candidate - f).norm());
    }
    return lo;
  };

  // The candidate starts at distance 0 (it equals target 0); walk the angle
  // until the minimum distance brackets the requested value, then bisect.
  double lo = 0.0, hi = 0.0;
  const int kGrid = 256;
  for (int g = 1; g <= kGrid; ++g) {
    const double theta = 3.141592653589793 * g / kGrid;
    if (min_distance(theta) >= distance) {
      hi = theta;
      lo = 3.141592653589793 * (g - 1) / kGrid;
      break;
    }
  }
  if (hi == 0.0) {
    throw InfeasibleError("anomaly_at_distance: requested distance too large");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (min_distance(mid) < distance) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Vector result = (std::cos(hi) * base + std::sin(hi) * u).normalized();
  return result;
}

Vector fine_pattern(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = (i % 2 == 0) ? 1.0 : -1.0;
  v /= v.norm();
  return v;
}

}  // namespace cdetect
