#include <cmath>
#include <vector>

#include "doctest.h"

#include "cdetect/errors.hpp"
#include "cdetect/model.hpp"
#include "cdetect/numerics.hpp"
#include "cdetect/sensing.hpp"

using namespace cdetect;

TEST_SUITE_BEGIN("sensing");

namespace {

Matrix random_covariance(Eigen::Index n, double lambda_max, RngStream stream) {
  const Matrix g = gaussian_matrix(n, n, 1.0, stream);
  Matrix cov = g * g.transpose();
  const double top = spectral_norm(cov);
  cov *= lambda_max / top;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

TEST_CASE("background tolerance trivial cases") {
  const Eigen::Index n = 6;
  const BackgroundModel zero = BackgroundModel::zero(n, 1.0);
  const Matrix a = gaussian_matrix(3, n, 1.0 / 3.0, RngStream{50, 0});
  const BackgroundTolerance ok = check_background_tolerance(a, zero);
  CHECK(ok.ok);
  CHECK(ok.lambda_max == 0.0);

  const BackgroundModel strong(Vector::Zero(n),
                               Matrix(2.0 * Matrix::Identity(n, n)), 1.0);
  const BackgroundTolerance bad =
      check_background_tolerance(Matrix::Identity(n, n), strong);
  CHECK(!bad.ok);
  CHECK(bad.threshold == doctest::Approx(1.0));
  CHECK(bad.lambda_max == doctest::Approx(2.0));
}

TEST_CASE("background tolerance threshold scales with the matrix norm") {
  const Eigen::Index k = 53, n = 106;
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{50, 1});
  const double norm = spectral_norm(a);
  const double threshold = 1.0 / (norm * norm);
  const BackgroundModel below(
      Vector::Zero(n), Matrix(0.9 * threshold * Matrix::Identity(n, n)), 1.0);
  const BackgroundModel above(
      Vector::Zero(n), Matrix(1.1 * threshold * Matrix::Identity(n, n)), 1.0);
  CHECK(check_background_tolerance(a, below).ok);
  CHECK(!check_background_tolerance(a, above).ok);
}

TEST_CASE("background tolerance is monotone in lambda_max") {
  const Matrix a = gaussian_matrix(10, 30, 0.1, RngStream{50, 2});
  const double threshold = check_background_tolerance(
      a, BackgroundModel::zero(30, 1.0)).threshold;
  for (double fraction : {0.1, 0.4, 0.7, 0.95}) {
    const BackgroundModel bg(
        Vector::Zero(30),
        Matrix(fraction * threshold * Matrix::Identity(30, 30)), 1.0);
    CHECK(check_background_tolerance(a, bg).ok);
  }
}

TEST_CASE("designed plan with zero background is a pure rescale") {
  const Eigen::Index k = 4, n = 9;
  const BackgroundModel bg = BackgroundModel::zero(n, 4.0);  // sigma = 2
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{51, 0});
  const SensingPlan plan = SensingPlan::designed(a, bg);
  CHECK((plan.phi() - 2.0 * a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((plan.whitener() - 0.5 * Matrix::Identity(k, k)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((plan.whitener() * plan.phi() - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("designed plans satisfy both whitening identities") {
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index k = 4 + trial % 8;
    const Eigen::Index n = 2 * k + 3;
    const RngStream stream{52, static_cast<std::uint64_t>(trial)};
    const Matrix a = gaussian_matrix(k, n, 1.0 / k, stream.sub(0));
    const double threshold =
        1.0 / std::pow(spectral_norm(a), 2.0);
    const Matrix cov =
        random_covariance(n, 0.5 * threshold, stream.sub(1));
    const double sigma2 = 0.5 + 3.0 * Sampler(stream.sub(2)).uniform();
    const BackgroundModel bg(Vector::Zero(n), cov, sigma2);

    const SensingPlan plan = SensingPlan::designed(a, bg);
    CHECK((plan.whitener() * plan.phi() - a).cwiseAbs().maxCoeff() <= 1e-8);
    const Matrix noise_cov =
        plan.phi() * cov * plan.phi().transpose() +
        sigma2 * Matrix::Identity(k, k);
    const Matrix identity_defect =
        plan.whitener() * noise_cov * plan.whitener().transpose() -
        Matrix::Identity(k, k);
    CHECK(identity_defect.cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("designed plan rejects intolerable backgrounds") {
  const Eigen::Index n = 8;
  const BackgroundModel strong(Vector::Zero(n),
                               Matrix(2.0 * Matrix::Identity(n, n)), 1.0);
  CHECK_THROWS_AS(SensingPlan::designed(Matrix::Identity(n, n), strong),
                  BackgroundToleranceError);
}

TEST_CASE("designed plan reports a numerically unsafe inner matrix") {
  // lambda_max just below 1/|A|^2 passes the tolerance check but leaves the
  // inner matrix with an eigenvalue under the default floor.
  const Eigen::Index n = 4;
  Matrix cov = Matrix::Zero(n, n);
  cov(0, 0) = 1.0 - 1e-16;
  const BackgroundModel bg(Vector::Zero(n), cov, 1.0);
  CHECK(check_background_tolerance(Matrix::Identity(n, n), bg).ok);
  CHECK_THROWS_AS(SensingPlan::designed(Matrix::Identity(n, n), bg),
                  NotPositiveDefiniteError);
}

TEST_CASE("whiten removes the projected background mean") {
  const Eigen::Index k = 5, n = 12;
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{53, 0});
  Vector mu = Vector::Zero(n);
  mu(3) = 2.0;
  mu(7) = -1.0;
  const Matrix cov = random_covariance(
      n, 0.4 / std::pow(spectral_norm(a), 2.0), RngStream{53, 1});
  const BackgroundModel bg(mu, cov, 1.3);
  const SensingPlan plan = SensingPlan::designed(a, bg);
  const Vector z = plan.phi() * mu;
  CHECK(whiten(plan, z, mu).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("whiten maps noiseless signals through the effective operator") {
  const Eigen::Index k = 6, n = 15;
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{54, 0});
  const Matrix cov = random_covariance(
      n, 0.3 / std::pow(spectral_norm(a), 2.0), RngStream{54, 1});
  const BackgroundModel bg(Vector::Zero(n), cov, 2.2);
  const SensingPlan plan = SensingPlan::designed(a, bg);
  Sampler s(RngStream{54, 2});
  const Vector f = standard_normal_vector(n, s).normalized();
  const double alpha = 3.7;
  const Vector z = plan.phi() * (alpha * f);
  const Vector y = whiten(plan, z, bg.mean());
  CHECK((y - alpha * (a * f)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("whitened pure noise has near-identity sample covariance") {
  const Eigen::Index k = 5, n = 10;
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{55, 0});
  const Matrix cov = random_covariance(
      n, 0.5 / std::pow(spectral_norm(a), 2.0), RngStream{55, 1});
  const BackgroundModel bg(Vector::Zero(n), cov, 1.7);
  const SensingPlan plan = SensingPlan::designed(a, bg);

  const int samples = 10000;
  Sampler s(RngStream{55, 2});
  Matrix sum = Matrix::Zero(k, k);
  for (int i = 0; i < samples; ++i) {
    const Vector b = bg.covariance_sqrt() * standard_normal_vector(n, s);
    const Vector w = bg.sigma() * standard_normal_vector(k, s);
    const Vector y = whiten(plan, plan.phi() * b + w, bg.mean());
    sum += y * y.transpose();
  }
  const Matrix empirical = sum / static_cast<double>(samples);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) {
      const double expected = r == c ? 1.0 : 0.0;
      const double se = std::sqrt((1.0 + expected) / samples);
      CHECK(std::abs(empirical(r, c) - expected) <= 5.0 * se);
    }
  }
}

TEST_CASE("random-phi plans whiten their own noise but reshape the operator") {
  const Eigen::Index k = 6, n = 18;
  const Matrix cov = random_covariance(n, 0.05, RngStream{56, 0});
  const BackgroundModel bg(Vector::Zero(n), cov, 2.0);
  const SensingPlan plan = SensingPlan::random_phi(k, bg, RngStream{56, 1});
  CHECK(plan.kind() == PlanKind::kRandomPhi);
  const Matrix noise_cov = plan.phi() * cov * plan.phi().transpose() +
                           2.0 * Matrix::Identity(k, k);
  const Matrix defect =
      plan.whitener() * noise_cov * plan.whitener().transpose() -
      Matrix::Identity(k, k);
  CHECK(defect.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((plan.whitener() * plan.phi() - plan.a()).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_CASE("distance preservation on identity and scaled identity") {
  std::vector<Vector> points;
  Sampler s(RngStream{57, 0});
  for (int i = 0; i < 4; ++i) points.push_back(standard_normal_vector(6, s));
  const DistanceCheck exact =
      verify_distance_preservation(Matrix::Identity(6, 6), points, 0.2);
  CHECK(exact.ok);
  CHECK(exact.worst_ratio_low == doctest::Approx(1.0));
  CHECK(exact.worst_ratio_high == doctest::Approx(1.0));

  const DistanceCheck doubled = verify_distance_preservation(
      Matrix(2.0 * Matrix::Identity(6, 6)), points, 0.5);
  CHECK(!doubled.ok);
  CHECK(doubled.worst_ratio_high == doctest::Approx(2.0));
}

TEST_CASE("gaussian projections fail distance preservation rarely") {
  // Failure fraction over 200 seeds stays below the union-bound rate
  // 2 |V|^2 exp(-K c(eps)) with c(eps) = eps^2/16 - eps^3/48, plus binomial
  // slack.
  const double eps = 0.6;
  const int vocab = 4;
  const Eigen::Index n = 380, k = 350;
  const double c_eps = eps * eps / 16.0 - eps * eps * eps / 48.0;
  const double rate_bound =
      2.0 * vocab * vocab * std::exp(-static_cast<double>(k) * c_eps);
  REQUIRE(rate_bound < 0.2);

  Sampler point_sampler(RngStream{58, 0});
  std::vector<Vector> points;
  for (int i = 0; i < vocab; ++i) {
    points.push_back(standard_normal_vector(n, point_sampler).normalized());
  }
  const int seeds = 200;
  int failures = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    const Matrix a = gaussian_matrix(
        k, n, 1.0 / k, RngStream{59, static_cast<std::uint64_t>(seed)});
    if (!verify_distance_preservation(a, points, eps).ok) ++failures;
  }
  const double slack =
      3.0 * std::sqrt(rate_bound * (1.0 - rate_bound) / seeds);
  CHECK(static_cast<double>(failures) / seeds <= rate_bound + slack);
}

TEST_CASE("spectral norms of gaussian matrices obey the concentration bound") {
  // |A| > (1+eps)(1 + sqrt(N/K)) in at most 2 exp(-(K+N) eps^2 / 2) of
  // draws, plus binomial slack.
  const double eps = 0.2;
  const Eigen::Index k = 40, n = 80;
  const double rate_bound =
      2.0 * std::exp(-0.5 * static_cast<double>(k + n) * eps * eps);
  const double limit =
      (1.0 + eps) * (1.0 + std::sqrt(static_cast<double>(n) / k));
  const int seeds = 500;
  int failures = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    const Matrix a = gaussian_matrix(
        k, n, 1.0 / k, RngStream{60, static_cast<std::uint64_t>(seed)});
    if (spectral_norm(a) > limit) ++failures;
  }
  const double slack =
      3.0 * std::sqrt(rate_bound * (1.0 - rate_bound) / seeds);
  CHECK(static_cast<double>(failures) / seeds <= rate_bound + slack);
}

TEST_CASE("distance preservation input validation") {
  std::vector<Vector> one{Vector::Ones(3)};
  CHECK_THROWS_AS(
      verify_distance_preservation(Matrix::Identity(3, 3), one, 0.5),
      InvalidInputError);
  std::vector<Vector> two{Vector::Ones(3), Vector::Zero(3)};
  CHECK_THROWS_AS(
      verify_distance_preservation(Matrix::Identity(3, 3), two, 1.5),
      InvalidInputError);
}

TEST_SUITE_END();
