#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "cdetect/asd.hpp"
#include "cdetect/dsd.hpp"
#include "cdetect/errors.hpp"
#include "cdetect/model.hpp"
#include "cdetect/sensing.hpp"

using namespace cdetect;

TEST_SUITE_BEGIN("asd");

namespace {

Dictionary random_dictionary(int m, Eigen::Index n, RngStream stream) {
  Sampler s(stream);
  std::vector<Vector> targets;
  for (int j = 0; j < m; ++j) {
    targets.push_back(standard_normal_vector(n, s).normalized());
  }
  return Dictionary(std::move(targets), std::vector<double>(m, 1.0 / m));
}

// Survival function of a central chi-squared with even dof 2m at x:
// P(chi^2_{2m} > x) = P(Poisson(x/2) < m).  Independent of the CDF series.
double central_survival_even_dof(double x, int dof) {
  REQUIRE(dof % 2 == 0);
  const int m = dof / 2;
  const double half = 0.5 * x;
  double term = std::exp(-half);
  double sum = term;
  for (int i = 1; i < m; ++i) {
    term *= half / i;
    sum += term;
  }
  return sum;
}

// Step-up rule evaluated directly from the definition.
std::vector<int> bh_oracle(const std::vector<double>& pvalues, double delta) {
  const int m = static_cast<int>(pvalues.size());
  std::vector<double> sorted(pvalues);
  std::sort(sorted.begin(), sorted.end());
  int t = 0;
  for (int i = 1; i <= m; ++i) {
    if (sorted[i - 1] <= delta * i / m) t = i;
  }
  std::vector<int> rejected;
  if (t == 0) return rejected;
  const double p_t = sorted[t - 1];
  for (int i = 0; i < m; ++i) {
    if (pvalues[i] <= p_t) rejected.push_back(i);
  }
  return rejected;
}

}  // namespace

TEST_CASE("anomaly statistic vanishes on an exact dictionary match") {
  const Dictionary dict = random_dictionary(3, 10, RngStream{90, 0});
  const Matrix a = gaussian_matrix(6, 10, 1.0 / 6, RngStream{90, 1});
  const Vector y = 2.5 * (a * dict.target(1));
  CHECK(anomaly_statistic(y, 2.5, a, dict) == doctest::Approx(0.0));
}

TEST_CASE("anomaly statistic reduces to a single residual for m = 1") {
  Vector f = Vector::Zero(8);
  f(2) = 1.0;
  const Dictionary dict({f}, {1.0});
  const Matrix a = gaussian_matrix(5, 8, 1.0 / 5, RngStream{91, 0});
  Sampler s(RngStream{91, 1});
  const Vector y = standard_normal_vector(5, s);
  CHECK(anomaly_statistic(y, 1.3, a, dict) ==
        doctest::Approx((y - 1.3 * (a * f)).norm()));
}

TEST_CASE("anomaly statistic equals the exhaustive minimum") {
  const Dictionary dict = random_dictionary(6, 12, RngStream{92, 0});
  const Matrix a = gaussian_matrix(7, 12, 1.0 / 7, RngStream{92, 1});
  Sampler s(RngStream{92, 2});
  for (int trial = 0; trial < 20; ++trial) {
    const Vector y = standard_normal_vector(7, s) * 2.0;
    double oracle = 1e300;
    for (int l = 0; l < dict.size(); ++l) {
      oracle = std::min(oracle, (y - 1.1 * (a * dict.target(l))).norm());
    }
    CHECK(anomaly_statistic(y, 1.1, a, dict) == doctest::Approx(oracle));
    const ProjectedDictionary projected(a, dict);
    CHECK(projected.statistic(y, 1.1) == doctest::Approx(oracle));
  }
}

TEST_CASE("anomaly statistic is invariant under dictionary permutation") {
  const Dictionary dict = random_dictionary(4, 9, RngStream{93, 0});
  std::vector<Vector> reversed(dict.targets().rbegin(), dict.targets().rend());
  const Dictionary permuted(reversed, dict.priors());
  const Matrix a = gaussian_matrix(6, 9, 1.0 / 6, RngStream{93, 1});
  Sampler s(RngStream{93, 2});
  const Vector y = standard_normal_vector(6, s);
  CHECK(anomaly_statistic(y, 0.7, a, dict) ==
        doctest::Approx(anomaly_statistic(y, 0.7, a, permuted)));
}

TEST_CASE("p-value bound equals one at a zero statistic") {
  CHECK(pvalue_upper_bound(0.0, 10, 3.0, 0.1, 0.1, 0.0) == 1.0);
}

TEST_CASE("p-value bound central case matches an even-dof closed form") {
  const int k = 50;
  const double d2 = k + 10.0 * std::sqrt(2.0 * k);
  const double bound =
      pvalue_upper_bound(std::sqrt(d2), k, 5.0, 0.0, 0.1, 0.0);
  CHECK(bound == doctest::Approx(central_survival_even_dof(d2, k))
                    .epsilon(1e-9));
}

TEST_CASE("p-value bound is nondecreasing in tau") {
  double prev = -1.0;
  for (double tau : {0.0, 0.1, 0.2}) {
    const double p = pvalue_upper_bound(3.0, 12, 4.0, tau, 0.1, 0.0);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("p-value bound validates its inputs") {
  CHECK_THROWS_AS(pvalue_upper_bound(-1.0, 10, 1.0, 0.1, 0.1, 0.0),
                  InvalidInputError);
  CHECK_THROWS_AS(pvalue_upper_bound(1.0, 10, 1.0, 1.5, 0.1, 0.0),
                  InvalidInputError);
  CHECK_THROWS_AS(pvalue_upper_bound(1.0, 10, 1.0, 0.1, 0.0, 0.0),
                  InvalidInputError);
  CHECK_THROWS_AS(pvalue_upper_bound(1.0, 10, 1.0, 0.1, 0.1, 2.0),
                  InvalidInputError);
}

TEST_CASE("step-up procedure on the worked example") {
  const std::vector<double> p{0.001, 0.02, 0.04, 0.9};
  const BhOutcome outcome = bh_procedure(p, 0.05);
  CHECK(outcome.threshold_index == 2);
  CHECK(outcome.p_threshold == doctest::Approx(0.02));
  REQUIRE(outcome.rejected.size() == 2);
  CHECK(outcome.rejected[0] == 0);
  CHECK(outcome.rejected[1] == 1);
}

TEST_CASE("step-up procedure extremes") {
  const std::vector<double> ones(8, 1.0);
  CHECK(bh_procedure(ones, 0.1).rejected.empty());
  CHECK(bh_procedure(ones, 0.1).threshold_index == 0);

  const std::vector<double> zeros(8, 0.0);
  CHECK(bh_procedure(zeros, 0.1).rejected.size() == 8);

  const std::vector<double> single{0.025};
  const BhOutcome outcome = bh_procedure(single, 0.05);
  CHECK(outcome.threshold_index == 1);
  CHECK(outcome.rejected == std::vector<int>{0});
}

TEST_CASE("step-up procedure matches the brute-force definition") {
  Sampler s(RngStream{94, 0});
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(s.next_bits() % 64);
    std::vector<double> p(m);
    for (double& v : p) {
      v = s.uniform();
      if (s.uniform() < 0.2) v *= 0.02;  // cluster some small p-values
    }
    const double delta = s.uniform(0.01, 0.3);
    const BhOutcome outcome = bh_procedure(p, delta);
    CHECK(outcome.rejected == bh_oracle(p, delta));
  }
}

TEST_CASE("step-up rejections are monotone in the level") {
  Sampler s(RngStream{95, 0});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(40);
    for (double& v : p) v = s.uniform();
    const double d1 = s.uniform(0.01, 0.2);
    const double d2 = d1 + s.uniform(0.0, 0.5);
    const auto r1 = bh_procedure(p, d1).rejected;
    const auto r2 = bh_procedure(p, d2).rejected;
    CHECK(std::includes(r2.begin(), r2.end(), r1.begin(), r1.end()));
  }
}

TEST_CASE("empirical rates on hand instances") {
  Scene scene;
  scene.labels = {0, 0, Scene::kAnomalousLabel, Scene::kAnomalousLabel};
  scene.alphas.assign(4, 1.0);
  scene.anomaly_mask = {0, 0, 1, 1};
  scene.true_signals.resize(4);

  // Rejections exactly on the anomalies.
  const std::vector<char> perfect{0, 0, 1, 1};
  const Rates rates = rates_from_rejections(perfect, scene);
  CHECK(rates.fdr == 0.0);
  CHECK(rates.fnr == 0.0);
  CHECK(rates.pd == 1.0);
  CHECK(rates.pf == 0.0);
  CHECK(rates.rejections == 2);
  CHECK(rates.false_discoveries == 0);

  // No rejections at all: the 0/0 convention gives zero FDR and pd.
  const std::vector<char> none(4, 0);
  const Rates empty = rates_from_rejections(none, scene);
  CHECK(empty.fdr == 0.0);
  CHECK(empty.pd == 0.0);
  CHECK(empty.fnr == doctest::Approx(0.5));
}

TEST_CASE("run_asd pipeline rejects a strong noiseless anomaly") {
  const Eigen::Index n = 20, k = 10;
  const Dictionary dict = random_dictionary(3, n, RngStream{96, 0});
  const BackgroundModel bg = BackgroundModel::zero(n, 1e-12);
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{96, 1});
  const SensingPlan plan = SensingPlan::designed(a, bg);

  Sampler s(RngStream{96, 2});
  const Vector anomaly =
      anomaly_at_distance(dict, 0.9, standard_normal_vector(n, s));
  Scene scene;
  const double alpha = 40.0;
  scene.labels = {0, Scene::kAnomalousLabel, 1};
  scene.alphas = {alpha, alpha, alpha};
  scene.anomaly_mask = {0, 1, 0};
  scene.true_signals = {dict.target(0), anomaly, dict.target(1)};
  const ObservationSet obs = generate_observations(scene, plan, RngStream{96, 3});

  const DetectionReport report =
      run_asd(obs, plan, dict, 0.05, 0.2, 0.05, AlphaMode::known(scene.alphas));
  CHECK(report.tests[1].pvalue_bound < 1e-6);
  const Rates rates = empirical_rates(report, scene);
  CHECK(rates.pd == 1.0);
  CHECK(rates.fdr == 0.0);
}

TEST_CASE("FDR stays controlled on anomaly-free scenes") {
  const Eigen::Index n = 24, k = 8;
  const Dictionary dict = random_dictionary(3, n, RngStream{97, 0});
  const BackgroundModel bg = BackgroundModel::zero(n, 1.0);
  const double delta = 0.1;
  const int trials = 200;
  double fdr_sum = 0.0;
  std::vector<double> fdrs(trials);
  for (int t = 0; t < trials; ++t) {
    const RngStream stream = RngStream{97, 1}.sub(t);
    const Matrix a = gaussian_matrix(k, n, 1.0 / k, stream.sub(0));
    const SensingPlan plan = SensingPlan::designed(a, bg);
    const Scene scene = generate_scene(dict, 100, AlphaLaw::constant(8.0),
                                       std::nullopt, stream.sub(1));
    const ObservationSet obs = generate_observations(scene, plan, stream.sub(2));
    const DetectionReport report = run_asd(obs, plan, dict, 0.1, 0.2, delta,
                                           AlphaMode::known(scene.alphas));
    fdrs[t] = empirical_rates(report, scene).fdr;
    fdr_sum += fdrs[t];
  }
  const double mean = fdr_sum / trials;
  double ss = 0.0;
  for (double f : fdrs) ss += (f - mean) * (f - mean);
  const double se = std::sqrt(ss / (trials - 1)) / std::sqrt(trials);
  CHECK(mean <= delta + 3.0 * se + 1e-12);
}

TEST_CASE("p-value upper bound dominates an exact Monte Carlo p-value") {
  // Small instance, known alpha, worst-case null at distance exactly tau.
  const Eigen::Index n = 16, k = 8;
  const double tau = 0.3, eps = 0.35, alpha = 3.0;
  const Dictionary dict = random_dictionary(2, n, RngStream{98, 0});
  const Vector null_signal = [&] {
    Sampler s(RngStream{98, 1});
    return anomaly_at_distance(dict, tau, standard_normal_vector(n, s));
  }();

  // Draw A until it certifies distance preservation on the involved vectors.
  Matrix a;
  bool certified = false;
  for (int attempt = 0; attempt < 200 && !certified; ++attempt) {
    a = gaussian_matrix(k, n, 1.0 / k,
                        RngStream{98, 2}.sub(attempt));
    std::vector<Vector> vocab(dict.targets());
    vocab.push_back(null_signal);
    certified = verify_distance_preservation(a, vocab, eps).ok;
  }
  REQUIRE(certified);

  Sampler noise(RngStream{98, 3});
  for (int instance = 0; instance < 5; ++instance) {
    const Vector y =
        alpha * (a * null_signal) + standard_normal_vector(k, noise);
    const double d = anomaly_statistic(y, alpha, a, dict);
    const double bound = pvalue_upper_bound(d, k, alpha, tau, eps, 0.0);

    const int draws = 100000;
    Sampler mc(RngStream{98, 4}.sub(instance));
    int exceed = 0;
    for (int i = 0; i < draws; ++i) {
      double best = 1e300;
      const Vector fresh = standard_normal_vector(k, mc);
      for (const Vector& f : dict.targets()) {
        best = std::min(best,
                        (alpha * (a * (null_signal - f)) + fresh).norm());
      }
      if (best >= d) ++exceed;
    }
    const double exact = static_cast<double>(exceed) / draws;
    const double se = std::sqrt(exact * (1.0 - exact) / draws);
    CHECK(exact <= bound + 3.0 * se + 1e-9);
  }
}

TEST_CASE("run_asd handles a single-location scene") {
  // One location whose p-value bound lands under delta must be rejected
  // with threshold index 1.
  const Eigen::Index n = 16, k = 8;
  const Dictionary dict = random_dictionary(2, n, RngStream{100, 0});
  const BackgroundModel bg = BackgroundModel::zero(n, 1e-12);
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{100, 1});
  const SensingPlan plan = SensingPlan::designed(a, bg);
  Sampler s(RngStream{100, 2});
  const Vector anomaly =
      anomaly_at_distance(dict, 0.8, standard_normal_vector(n, s));

  Scene scene;
  scene.labels = {Scene::kAnomalousLabel};
  scene.alphas = {30.0};
  scene.anomaly_mask = {1};
  scene.true_signals = {anomaly};
  const ObservationSet obs = generate_observations(scene, plan, RngStream{100, 3});
  const DetectionReport report = run_asd(obs, plan, dict, 0.05, 0.2, 0.05,
                                         AlphaMode::known(scene.alphas));
  CHECK(report.tests[0].pvalue_bound < 0.025);
  CHECK(report.outcome.threshold_index == 1);
  CHECK(report.outcome.rejected == std::vector<int>{0});
}

TEST_CASE("run_asd validates known-alpha coverage") {
  const Dictionary dict = random_dictionary(2, 6, RngStream{99, 0});
  const BackgroundModel bg = BackgroundModel::zero(6, 1.0);
  const SensingPlan plan = SensingPlan::identity(bg);
  Scene scene;
  scene.labels = {0};
  scene.alphas = {1.0};
  scene.anomaly_mask = {0};
  scene.true_signals = {dict.target(0)};
  const ObservationSet obs = generate_observations(scene, plan, RngStream{99, 1});
  CHECK_THROWS_AS(run_asd(obs, plan, dict, 0.1, 0.1, 0.05,
                          AlphaMode::known({1.0, 2.0})),
                  ShapeError);
}

TEST_SUITE_END();
