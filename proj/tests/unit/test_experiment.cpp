#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "cdetect/errors.hpp"
#include "cdetect/experiment.hpp"
#include "cdetect/io.hpp"

using namespace cdetect;

TEST_SUITE_BEGIN("experiment");

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("cdetect_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Small, fast configuration used by the harness tests.
std::string tiny_dsd_config() {
  return R"({
    "mode": "dsd",
    "n": 24,
    "k_grid": [6, 8],
    "locations": 60,
    "trials": 3,
    "seed": 7,
    "threads": 1,
    "dictionary": {"m": 3, "d_min": 0.3},
    "background": {"sigma2": 2.0, "lambda_max": 0.01, "profile": "generic"},
    "alpha": {"law": "uniform_sqrt_k", "lo": 8, "hi": 10},
    "alpha_mode": "known",
    "detector": {"bound_epsilon": 0.5},
    "methods": ["designed_phi", "random_phi"]
  })";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

TEST_CASE("config parsing applies defaults and overrides") {
  const ExperimentConfig cfg = parse_experiment_config(
      tiny_dsd_config(),
      {"detector.delta=0.01", "seed=11", "k_grid=[4,5]"});
  CHECK(cfg.detector.delta == doctest::Approx(0.01));
  CHECK(cfg.seed == 11);
  REQUIRE(cfg.k_grid.size() == 2);
  CHECK(cfg.k_grid[0] == 4);
  CHECK(cfg.methods.size() == 2);
}

TEST_CASE("config validation rejects bad input") {
  CHECK_THROWS_AS(parse_experiment_config("{\"mode\": \"nope\"}"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config(tiny_dsd_config(), {"k_grid=[40]"}),
      ConfigError);  // K > N
  CHECK_THROWS_AS(
      parse_experiment_config(tiny_dsd_config(), {"detector.delta=1.5"}),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config(tiny_dsd_config(),
                              {"methods=[\"glrt_downsample\"]"}),
      ConfigError);  // anomaly detector in dsd mode
  CHECK_THROWS_AS(parse_experiment_config("not json"), ConfigError);
  // asd mode needs an anomaly block.
  CHECK_THROWS_AS(
      parse_experiment_config(tiny_dsd_config(),
                              {"mode=asd", "methods=[\"designed_phi\"]"}),
      ConfigError);
}

TEST_CASE("dictionary and scene JSON round-trips are lossless") {
  const fs::path dir = temp_dir("io");
  const Dictionary dict = synthetic_dictionary(
      4, 16, 0.2, {0.4, 0.3, 0.2, 0.1}, RngStream{130, 0});
  save_dictionary(dict, dir / "dict.json");
  const Dictionary loaded = load_dictionary(dir / "dict.json");
  REQUIRE(loaded.size() == dict.size());
  for (int j = 0; j < dict.size(); ++j) {
    CHECK((loaded.target(j) - dict.target(j)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.prior(j) == dict.prior(j));
  }

  Sampler s(RngStream{130, 1});
  const Vector anomaly =
      anomaly_at_distance(dict, 0.4, standard_normal_vector(16, s));
  const Scene scene =
      generate_scene(dict, 40, AlphaLaw::uniform(1.0, 2.0),
                     AnomalySpec{anomaly, 6}, RngStream{130, 2});
  save_scene(scene, dir / "scene.json");
  const Scene loaded_scene = load_scene(dir / "scene.json", dict, anomaly);
  CHECK(loaded_scene.labels == scene.labels);
  CHECK(loaded_scene.alphas == scene.alphas);
  CHECK(loaded_scene.anomaly_mask == scene.anomaly_mask);
  for (int i = 0; i < scene.size(); ++i) {
    CHECK((loaded_scene.true_signals[i] - scene.true_signals[i])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("plan export writes construction, dims, and matrices") {
  const fs::path dir = temp_dir("plan");
  const BackgroundModel bg = BackgroundModel::zero(6, 2.0);
  const Matrix a = gaussian_matrix(3, 6, 1.0 / 3.0, RngStream{131, 0});
  SensingPlan plan = SensingPlan::designed(a, bg);
  plan.set_epsilon(0.25);
  save_plan(plan, dir / "plan.json");
  const std::string text = slurp(dir / "plan.json");
  CHECK(text.find("\"construction\": \"designed\"") != std::string::npos);
  CHECK(text.find("\"k\": 3") != std::string::npos);
  CHECK(text.find("\"n\": 6") != std::string::npos);
  CHECK(text.find("\"epsilon\": 0.25") != std::string::npos);
  CHECK(text.find("\"phi\"") != std::string::npos);
  CHECK(text.find("\"whitener\"") != std::string::npos);
}

TEST_CASE("run_experiment output bytes are reproducible") {
  const ExperimentConfig cfg = parse_experiment_config(tiny_dsd_config());
  const fs::path dir_a = temp_dir("repro_a");
  const fs::path dir_b = temp_dir("repro_b");
  const RunResult a = run_experiment(cfg, dir_a);
  const RunResult b = run_experiment(cfg, dir_b);
  CHECK(slurp(a.per_trial_csv) == slurp(b.per_trial_csv));
  CHECK(slurp(a.aggregate_csv) == slurp(b.aggregate_csv));

  // Scheduling must not affect the bytes either.
  ExperimentConfig threaded = cfg;
  threaded.threads = 2;
  const fs::path dir_c = temp_dir("repro_c");
  const RunResult c = run_experiment(threaded, dir_c);
  CHECK(slurp(a.per_trial_csv) == slurp(c.per_trial_csv));
  CHECK(slurp(a.aggregate_csv) == slurp(c.aggregate_csv));
}

TEST_CASE("aggregate rows equal means recomputed from per-trial rows") {
  const ExperimentConfig cfg = parse_experiment_config(tiny_dsd_config());
  const fs::path dir = temp_dir("agg");
  const RunResult result = run_experiment(cfg, dir);

  const auto per_trial = parse_csv(slurp(result.per_trial_csv));
  const auto aggregate = parse_csv(slurp(result.aggregate_csv));
  REQUIRE(per_trial.size() > 1);
  REQUIRE(aggregate.size() > 1);

  // Recompute mean worst-case pFDR per (k, method) from per-trial rows.
  std::map<std::pair<std::string, std::string>, std::vector<double>> worst;
  for (std::size_t r = 1; r < per_trial.size(); ++r) {
    const auto& row = per_trial[r];
    if (row[3] != "-1") continue;  // worst-case rows only
    const double value = std::strtod(row[4].c_str(), nullptr);
    if (std::isnan(value)) continue;
    worst[{row[0], row[1]}].push_back(value);
  }
  int checked = 0;
  for (std::size_t r = 1; r < aggregate.size(); ++r) {
    const auto& row = aggregate[r];
    if (row[2] != "-1") continue;
    const auto key = std::make_pair(row[0], row[1]);
    REQUIRE(worst.count(key) == 1);
    double sum = 0.0;
    for (double v : worst[key]) sum += v;
    const double mean = sum / worst[key].size();
    CHECK(std::strtod(row[3].c_str(), nullptr) ==
          doctest::Approx(mean).epsilon(1e-12));
    ++checked;
  }
  CHECK(checked == 4);  // two K values x two methods
}

TEST_CASE("emit_plot_data projects the dsd aggregate and round-trips") {
  const ExperimentConfig cfg = parse_experiment_config(tiny_dsd_config());
  const fs::path dir = temp_dir("plots");
  const RunResult result = run_experiment(cfg, dir);
  const fs::path series_csv = dir / "series.csv";
  emit_plot_data(result.aggregate_csv, series_csv);

  const auto series = parse_csv(slurp(series_csv));
  REQUIRE(series.size() == 5);  // header + 2 K x 2 methods
  CHECK(series[0][0] == "series");

  // Re-parsing reproduces the aggregate's numeric values exactly.
  const auto aggregate = parse_csv(slurp(result.aggregate_csv));
  std::map<std::pair<std::string, std::string>, double> worst_mean;
  for (std::size_t r = 1; r < aggregate.size(); ++r) {
    if (aggregate[r][2] != "-1") continue;
    worst_mean[{aggregate[r][0], aggregate[r][1]}] =
        std::strtod(aggregate[r][3].c_str(), nullptr);
  }
  for (std::size_t r = 1; r < series.size(); ++r) {
    const auto& row = series[r];
    CHECK(row[0] == "pfdr_vs_k");
    const double y = std::strtod(row[4].c_str(), nullptr);
    CHECK(y == worst_mean[{row[2], row[1]}]);
  }
}

TEST_CASE("emit_plot_data rejects unknown schemas") {
  const fs::path dir = temp_dir("schema");
  {
    std::ofstream out(dir / "bad.csv");
    out << "foo,bar\n1,2\n";
  }
  CHECK_THROWS_AS(emit_plot_data(dir / "bad.csv", dir / "out.csv"),
                  ConfigError);
}

TEST_CASE("asd experiment writes rate tables") {
  const std::string config = R"({
    "mode": "asd",
    "n": 24,
    "k_grid": [8],
    "locations": 80,
    "trials": 3,
    "seed": 3,
    "threads": 1,
    "dictionary": {"m": 3, "d_min": 0.3},
    "background": {"sigma2": 1.5, "lambda_max": 0.01, "profile": "generic"},
    "alpha": {"law": "uniform_sqrt_k", "lo": 2, "hi": 3},
    "alpha_mode": "known",
    "anomaly": {"count": 8, "distance": 0.6, "fine_direction": false},
    "detector": {"tau": 0.1, "epsilon": 0.1, "delta": 0.05},
    "methods": ["designed_phi"],
    "write_locations": true
  })";
  const ExperimentConfig cfg = parse_experiment_config(config);
  const fs::path dir = temp_dir("asd_run");
  const RunResult result = run_experiment(cfg, dir);
  const auto aggregate = parse_csv(slurp(result.aggregate_csv));
  REQUIRE(aggregate.size() == 2);
  CHECK(aggregate[0][0] == "k");
  CHECK(fs::exists(dir / "locations.csv"));

  const fs::path series_csv = dir / "series.csv";
  emit_plot_data(result.aggregate_csv, series_csv);
  const auto series = parse_csv(slurp(series_csv));
  REQUIRE(series.size() == 2);
  CHECK(series[1][0] == "operating_point");
}

TEST_CASE("roc experiment emits pseudo-ROC series") {
  const std::string config = R"({
    "mode": "roc",
    "n": 24,
    "k_grid": [8],
    "locations": 80,
    "trials": 2,
    "seed": 5,
    "threads": 1,
    "dictionary": {"m": 3, "d_min": 0.3},
    "background": {"sigma2": 1.5, "lambda_max": 0.01, "profile": "generic"},
    "alpha": {"law": "uniform_sqrt_k", "lo": 2, "hi": 3},
    "alpha_mode": "known",
    "anomaly": {"count": 8, "distance": 0.6, "fine_direction": false},
    "detector": {"tau": 0.1, "epsilon": 0.1, "eta_points": 10},
    "methods": ["designed_phi", "glrt_downsample"]
  })";
  const ExperimentConfig cfg = parse_experiment_config(config);
  const fs::path dir = temp_dir("roc_run");
  const RunResult result = run_experiment(cfg, dir);
  const auto aggregate = parse_csv(slurp(result.aggregate_csv));
  // header + 2 methods x (eta_points + 1)
  REQUIRE(aggregate.size() == 1 + 2 * 11);

  const fs::path series_csv = dir / "series.csv";
  emit_plot_data(result.aggregate_csv, series_csv);
  const auto series = parse_csv(slurp(series_csv));
  REQUIRE(series.size() == 1 + 2 * 2 * 11);  // pseudo_roc and roc series
}

TEST_CASE("bounds experiment tabulates the bound formulas") {
  const std::string config = R"({
    "mode": "bounds",
    "n": 106,
    "k_grid": [44, 53],
    "detector": {"bound_epsilon": 0.5},
    "bounds": {
      "alpha_min": [140.0],
      "d_min": [0.04341],
      "priors": [[0.05, 0.15]]
    }
  })";
  const ExperimentConfig cfg = parse_experiment_config(config);
  const fs::path dir = temp_dir("bounds_run");
  const RunResult result = run_experiment(cfg, dir);
  const auto table = parse_csv(slurp(result.aggregate_csv));
  REQUIRE(table.size() == 3);  // header + 2 K rows

  // Cross-check one row against a direct evaluation.
  BoundInputs inputs;
  inputs.k = 44;
  inputs.n = 106;
  inputs.alpha_min = 140.0;
  inputs.d_min = 0.04341;
  inputs.p_min = 0.05;
  inputs.p_max = 0.15;
  inputs.epsilon = 0.5;
  const AchievableBound direct = achievable_pfdr_bound(inputs);
  CHECK(std::strtod(table[1][7].c_str(), nullptr) ==
        doctest::Approx(direct.value).epsilon(1e-12));
  const int k_min =
      min_measurements(inputs.alpha_min, inputs.d_min, inputs.p_min,
                       inputs.p_max);
  CHECK(std::strtod(table[1][11].c_str(), nullptr) ==
        doctest::Approx(static_cast<double>(k_min)));
}

TEST_CASE("pseudo_roc_area on hand curves") {
  // Constant curve at y = 0.5 covering all of [0, 1].
  const std::vector<double> x{0.0, 1.0};
  const std::vector<double> y{0.5, 0.5};
  CHECK(pseudo_roc_area(x, y) == doctest::Approx(0.5));

  // Step curve: y = 0.2 until x = 0.5, then y = 1.
  const std::vector<double> x2{0.1, 0.5, 0.9};
  const std::vector<double> y2{0.2, 1.0, 1.0};
  // area = 0.2 * 0.5 + 1.0 * 0.5
  CHECK(pseudo_roc_area(x2, y2) == doctest::Approx(0.6));
}

TEST_CASE("roc_dominance_fraction on hand curves") {
  const std::vector<double> xa{0.0, 0.2, 0.4};
  const std::vector<double> ya{0.3, 0.6, 0.9};
  const std::vector<double> xb{0.0, 0.2, 0.4};
  const std::vector<double> yb{0.2, 0.5, 0.95};
  CHECK(roc_dominance_fraction(xa, ya, xb, yb) ==
        doctest::Approx(2.0 / 3.0));
  CHECK(roc_dominance_fraction(xa, ya, xa, ya) == doctest::Approx(1.0));
}

TEST_CASE("scenario honors the fail-fast background tolerance") {
  // A background far above the tolerance must abort the run immediately.
  const ExperimentConfig cfg = parse_experiment_config(
      tiny_dsd_config(), {"background.lambda_max=0.5", "trials=1"});
  const fs::path dir = temp_dir("failfast");
  CHECK_THROWS_AS(run_experiment(cfg, dir), BackgroundToleranceError);
}

TEST_SUITE_END();
