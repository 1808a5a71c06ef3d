#ifndef CDETECT_EXPERIMENT_HPP
#define CDETECT_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdetect/asd.hpp"
#include "cdetect/dsd.hpp"
#include "cdetect/model.hpp"

namespace cdetect {

enum class Mode { kDsd, kAsd, kBounds, kRoc };
enum class Method { kDesignedPhi, kRandomPhi, kDownsampleMap, kGlrtDownsample };

std::string to_string(Mode mode);
std::string to_string(Method method);
Mode mode_from_string(const std::string& name);
Method method_from_string(const std::string& name);

struct DictionaryConfig {
  std::optional<std::string> file;
  // Synthetic dictionary parameters (used when no file is given).
  int m = 9;
  double d_min = 0.05;
  std::vector<double> priors;  // empty means equal priors
  bool fine_pair = false;      // close pair differs along the fine pattern
};

struct BackgroundConfig {
  double sigma2 = 5.0;
  double lambda_max = 0.03;
  std::string profile = "generic";  // generic | fine_aligned | zero
};

struct AlphaConfig {
  std::string law = "uniform_sqrt_k";  // constant | uniform | uniform_sqrt_k
  double lo = 21.0;
  double hi = 25.0;
};

struct AnomalyConfig {
  int count = 0;
  double distance = 0.5308;
  bool fine_direction = true;  // anomaly differs along the fine pattern
};

struct DetectorConfig {
  double tau = 0.1;
  double epsilon = 0.1;  // distance-preservation accuracy
  double delta = 0.05;   // FDR level for the step-up procedure
  double zeta = 0.1;     // assumed strength-estimate accuracy in AU mode
  int eta_points = 40;   // thresholds per ROC sweep
  double bound_epsilon = 0.1;  // concentration slack in the pFDR bound
};

struct BoundsGridConfig {
  std::vector<double> alpha_min = {1.0, 2.0, 4.0, 8.0};
  std::vector<double> d_min = {0.05, 0.1, 0.5};
  std::vector<std::pair<double, double>> priors = {{0.05, 0.15},
                                                   {1.0 / 9, 1.0 / 9}};
};

struct ExperimentConfig {
  Mode mode = Mode::kDsd;
  int n = 106;
  std::vector<int> k_grid = {18, 35, 53};
  int locations = 2000;
  int trials = 200;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  DictionaryConfig dictionary;
  BackgroundConfig background;
  AlphaConfig alpha;
  std::string alpha_mode = "known";  // known | estimate
  std::optional<AnomalyConfig> anomaly;
  DetectorConfig detector;
  BoundsGridConfig bounds;
  std::vector<Method> methods = {Method::kDesignedPhi};
  bool write_locations = false;

  void validate() const;  // throws ConfigError
  AlphaLaw alpha_law_for(int k) const;
};

// Reads a JSON config and applies `key.path=value` overrides.
ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    const std::vector<std::string>& overrides = {});
ExperimentConfig parse_experiment_config(
    const std::string& json_text,
    const std::vector<std::string>& overrides = {});

// Inputs shared by every trial of a run.
struct Scenario {
  Dictionary dict;
  DictionaryStats stats;
  BackgroundModel background;
  std::optional<Vector> anomaly_signal;
};

Scenario build_scenario(const ExperimentConfig& cfg);

// One (K, method, trial) unit of work; all randomness comes from `stream`.
struct DsdTrialResult {
  PfdrReport report;
  double bound = 1.0;
  bool conditions_ok = false;
  double alpha_min = 0.0;
};

DsdTrialResult run_dsd_trial(const ExperimentConfig& cfg,
                             const Scenario& scenario, int k, Method method,
                             RngStream stream);

struct AsdTrialResult {
  Rates rates;
  double zeta_realized = 0.0;  // max |alpha/alpha_hat - 1| over locations
  DetectionReport report;
  Scene scene;
};

AsdTrialResult run_asd_trial(const ExperimentConfig& cfg,
                             const Scenario& scenario, int k, Method method,
                             RngStream stream);

struct RocTrialResult {
  std::vector<double> eta;  // thresholds, one per grid point
  std::vector<Rates> rates;
};

RocTrialResult run_roc_trial(const ExperimentConfig& cfg,
                             const Scenario& scenario, int k, Method method,
                             RngStream stream);

struct RunResult {
  std::filesystem::path per_trial_csv;
  std::filesystem::path aggregate_csv;
  std::filesystem::path metadata_json;
};

// Runs the configured Monte Carlo sweep and writes per-trial and aggregate
// tables under `out_dir`.  Output bytes depend only on (config, seed);
// wall-clock metadata goes to the sidecar only.
RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::filesystem::path& out_dir);

// Projects an aggregate table onto tidy plot series (one row per point).
void emit_plot_data(const std::filesystem::path& aggregate_csv,
                    const std::filesystem::path& out_csv);

// Curve utilities for ROC-style comparisons. -----------------------------

// Area under the upper envelope of (x, y) points, padded to x = 0 and x = 1.
double pseudo_roc_area(std::span<const double> x, std::span<const double> y);

// Fraction of B's points dominated by curve A: A reaches y >= y_B without
// exceeding x_B (upper-envelope interpolation, 1e-12 tie tolerance).
double roc_dominance_fraction(std::span<const double> xa,
                              std::span<const double> ya,
                              std::span<const double> xb,
                              std::span<const double> yb);

}  // namespace cdetect

#endif  // CDETECT_EXPERIMENT_HPP
