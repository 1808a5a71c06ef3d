#include "cdetect/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "cdetect/baselines.hpp"
#include "cdetect/errors.hpp"
#include "cdetect/io.hpp"
#include "cdetect/sensing.hpp"

namespace cdetect {

namespace {

using nlohmann::json;

constexpr std::uint64_t kDictChild = 100;
constexpr std::uint64_t kBackgroundChild = 101;
constexpr std::uint64_t kAnomalyChild = 102;
constexpr std::uint64_t kTrialChild = 1;

double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

struct MeanStderr {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stderr_ = 0.0;
  int count = 0;
};

MeanStderr summarize(std::span<const double> values) {
  MeanStderr out;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++out.count;
  }
  if (out.count == 0) return out;
  out.mean = sum / out.count;
  if (out.count > 1) {
    double ss = 0.0;
    for (double v : values) {
      if (std::isnan(v)) continue;
      ss += (v - out.mean) * (v - out.mean);
    }
    out.stderr_ = std::sqrt(ss / (out.count - 1)) / std::sqrt(out.count);
  }
  return out;
}

// Runs fn(0..count-1) on up to `threads` workers; each index writes its own
// output slot, so scheduling cannot change results.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
  }
  threads = std::clamp(threads, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          fn(i);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kDsd: return "dsd";
    case Mode::kAsd: return "asd";
    case Mode::kBounds: return "bounds";
    case Mode::kRoc: return "roc";
  }
  return "dsd";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kDesignedPhi: return "designed_phi";
    case Method::kRandomPhi: return "random_phi";
    case Method::kDownsampleMap: return "downsample_map";
    case Method::kGlrtDownsample: return "glrt_downsample";
  }
  return "designed_phi";
}

Mode mode_from_string(const std::string& name) {
  if (name == "dsd") return Mode::kDsd;
  if (name == "asd") return Mode::kAsd;
  if (name == "bounds") return Mode::kBounds;
  if (name == "roc") return Mode::kRoc;
  throw ConfigError("unknown mode: " + name);
}

Method method_from_string(const std::string& name) {
  if (name == "designed_phi") return Method::kDesignedPhi;
  if (name == "random_phi") return Method::kRandomPhi;
  if (name == "downsample_map") return Method::kDownsampleMap;
  if (name == "glrt_downsample") return Method::kGlrtDownsample;
  throw ConfigError("unknown method: " + name);
}

void ExperimentConfig::validate() const {
  if (n < 1) throw ConfigError("n must be positive");
  if (k_grid.empty()) throw ConfigError("k_grid must not be empty");
  for (int k : k_grid) {
    if (k < 1 || k > n) throw ConfigError("every K must satisfy 1 <= K <= N");
  }
  if (locations < 1) throw ConfigError("locations must be positive");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(detector.delta > 0.0 && detector.delta < 1.0)) {
    throw ConfigError("detector.delta must lie in (0, 1)");
  }
  if (!(detector.epsilon > 0.0 && detector.epsilon < 1.0)) {
    throw ConfigError("detector.epsilon must lie in (0, 1)");
  }
  if (detector.tau < 0.0 || detector.tau >= std::sqrt(2.0)) {
    throw ConfigError("detector.tau must lie in [0, sqrt(2))");
  }
  if (detector.zeta < 0.0 || detector.zeta > 1.0) {
    throw ConfigError("detector.zeta must lie in [0, 1]");
  }
  if (detector.eta_points < 2) {
    throw ConfigError("detector.eta_points must be >= 2");
  }
  if (methods.empty()) throw ConfigError("methods must not be empty");
  if (alpha_mode != "known" && alpha_mode != "estimate") {
    throw ConfigError("alpha_mode must be 'known' or 'estimate'");
  }
  if (alpha.law != "constant" && alpha.law != "uniform" &&
      alpha.law != "uniform_sqrt_k") {
    throw ConfigError("alpha.law must be constant|uniform|uniform_sqrt_k");
  }
  if (background.profile != "generic" && background.profile != "fine_aligned" &&
      background.profile != "zero") {
    throw ConfigError("background.profile must be generic|fine_aligned|zero");
  }
  if (background.lambda_max < 0.0 || !(background.sigma2 > 0.0)) {
    throw ConfigError("background parameters out of range");
  }
  for (Method m : methods) {
    const bool downsampled =
        m == Method::kDownsampleMap || m == Method::kGlrtDownsample;
    if (downsampled && alpha_mode == "estimate") {
      throw ConfigError(
          "downsampled baselines support alpha_mode 'known' only");
    }
    if (mode == Mode::kDsd && m == Method::kGlrtDownsample) {
      throw ConfigError("glrt_downsample is an anomaly detector");
    }
    if (mode == Mode::kAsd && downsampled) {
      throw ConfigError(
          "asd mode is p-value based; downsampled baselines run in roc mode");
    }
  }
  if ((mode == Mode::kAsd || mode == Mode::kRoc)) {
    if (!anomaly) throw ConfigError("asd/roc modes need an anomaly block");
    if (anomaly->count < 0 || anomaly->count > locations) {
      throw ConfigError("anomaly.count out of range");
    }
    if (!(anomaly->distance > 0.0) ||
        anomaly->distance >= std::sqrt(2.0)) {
      throw ConfigError("anomaly.distance must lie in (0, sqrt(2))");
    }
  }
  if (!dictionary.file) {
    if (dictionary.m < 2) throw ConfigError("dictionary.m must be >= 2");
    if (!(dictionary.d_min > 0.0) || dictionary.d_min >= 1.0) {
      throw ConfigError("dictionary.d_min must lie in (0, 1)");
    }
    if (!dictionary.priors.empty() &&
        dictionary.priors.size() != static_cast<std::size_t>(dictionary.m)) {
      throw ConfigError("dictionary.priors length must equal dictionary.m");
    }
  }
}

AlphaLaw ExperimentConfig::alpha_law_for(int k) const {
  if (alpha.law == "constant") return AlphaLaw::constant(alpha.lo);
  if (alpha.law == "uniform") return AlphaLaw::uniform(alpha.lo, alpha.hi);
  return AlphaLaw::uniform_sqrt_k(alpha.lo, alpha.hi, k);
}

namespace {

void apply_override(json& tree, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must look like key.path=value: " + spec);
  }
  const std::string path = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // plain string
  }
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("mode")) cfg.mode = mode_from_string(j["mode"]);
  cfg.n = j.value("n", cfg.n);
  if (j.contains("k_grid")) cfg.k_grid = j["k_grid"].get<std::vector<int>>();
  cfg.locations = j.value("locations", cfg.locations);
  cfg.trials = j.value("trials", cfg.trials);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.alpha_mode = j.value("alpha_mode", cfg.alpha_mode);
  cfg.write_locations = j.value("write_locations", cfg.write_locations);

  if (j.contains("dictionary")) {
    const json& d = j["dictionary"];
    if (d.contains("file")) {
      cfg.dictionary.file = d["file"].get<std::string>();
    }
    cfg.dictionary.m = d.value("m", cfg.dictionary.m);
    cfg.dictionary.d_min = d.value("d_min", cfg.dictionary.d_min);
    cfg.dictionary.fine_pair = d.value("fine_pair", cfg.dictionary.fine_pair);
    if (d.contains("priors") && d["priors"].is_array()) {
      cfg.dictionary.priors = d["priors"].get<std::vector<double>>();
      double sum = std::accumulate(cfg.dictionary.priors.begin(),
                                   cfg.dictionary.priors.end(), 0.0);
      if (!(sum > 0.0)) throw ConfigError("dictionary.priors must be positive");
      for (double& p : cfg.dictionary.priors) p /= sum;
    }
  }
  if (j.contains("background")) {
    const json& b = j["background"];
    cfg.background.sigma2 = b.value("sigma2", cfg.background.sigma2);
    cfg.background.lambda_max =
        b.value("lambda_max", cfg.background.lambda_max);
    cfg.background.profile = b.value("profile", cfg.background.profile);
  }
  if (j.contains("alpha")) {
    const json& a = j["alpha"];
    cfg.alpha.law = a.value("law", cfg.alpha.law);
    cfg.alpha.lo = a.value("lo", cfg.alpha.lo);
    cfg.alpha.hi = a.value("hi", cfg.alpha.hi);
  }
  if (j.contains("anomaly")) {
    AnomalyConfig anomaly;
    const json& a = j["anomaly"];
    anomaly.count = a.value("count", anomaly.count);
    anomaly.distance = a.value("distance", anomaly.distance);
    anomaly.fine_direction = a.value("fine_direction", anomaly.fine_direction);
    cfg.anomaly = anomaly;
  }
  if (j.contains("detector")) {
    const json& d = j["detector"];
    cfg.detector.tau = d.value("tau", cfg.detector.tau);
    cfg.detector.epsilon = d.value("epsilon", cfg.detector.epsilon);
    cfg.detector.delta = d.value("delta", cfg.detector.delta);
    cfg.detector.zeta = d.value("zeta", cfg.detector.zeta);
    cfg.detector.eta_points = d.value("eta_points", cfg.detector.eta_points);
    cfg.detector.bound_epsilon =
        d.value("bound_epsilon", cfg.detector.bound_epsilon);
  }
  if (j.contains("bounds")) {
    const json& b = j["bounds"];
    if (b.contains("alpha_min")) {
      cfg.bounds.alpha_min = b["alpha_min"].get<std::vector<double>>();
    }
    if (b.contains("d_min")) {
      cfg.bounds.d_min = b["d_min"].get<std::vector<double>>();
    }
    if (b.contains("priors")) {
      cfg.bounds.priors.clear();
      for (const json& pair : b["priors"]) {
        cfg.bounds.priors.emplace_back(pair.at(0).get<double>(),
                                       pair.at(1).get<double>());
      }
    }
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const json& name : j["methods"]) {
      cfg.methods.push_back(method_from_string(name.get<std::string>()));
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

ExperimentConfig parse_experiment_config(
    const std::string& json_text, const std::vector<std::string>& overrides) {
  json tree;
  try {
    tree = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const std::string& spec : overrides) apply_override(tree, spec);
  return config_from_json(tree);
}

ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str(), overrides);
}

namespace {

Matrix background_covariance(const ExperimentConfig& cfg, RngStream stream) {
  const Eigen::Index n = cfg.n;
  const double lambda = cfg.background.lambda_max;
  if (cfg.background.profile == "zero" || lambda == 0.0) {
    return Matrix::Zero(n, n);
  }
  if (cfg.background.profile == "fine_aligned") {
    // Dominant eigenvector along the fine pattern; mild coloring elsewhere.
    const Vector p = fine_pattern(n);
    Matrix cov = (lambda - lambda / 20.0) * (p * p.transpose());
    cov += (lambda / 20.0) * Matrix::Identity(n, n);
    return cov;
  }
  // generic: random orthogonal basis, eigenvalues in [lambda/20, lambda].
  Sampler sampler(stream);
  const Matrix g = gaussian_matrix(n, n, 1.0, stream.sub(7));
  const Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Vector values(n);
  values(0) = lambda;
  for (Eigen::Index i = 1; i < n; ++i) {
    values(i) = lambda * sampler.uniform(0.05, 1.0);
  }
  Matrix cov = q * values.asDiagonal() * q.transpose();
  return 0.5 * (cov + cov.transpose());
}

std::vector<double> dictionary_priors(const DictionaryConfig& dc) {
  if (!dc.priors.empty()) return dc.priors;
  return std::vector<double>(dc.m, 1.0 / dc.m);
}

}  // namespace

Scenario build_scenario(const ExperimentConfig& cfg) {
  cfg.validate();
  const RngStream root{cfg.seed, 0};

  Dictionary dict = [&] {
    if (cfg.dictionary.file) {
      return load_dictionary(*cfg.dictionary.file);
    }
    std::optional<Vector> direction;
    if (cfg.dictionary.fine_pair) direction = fine_pattern(cfg.n);
    return synthetic_dictionary(cfg.dictionary.m, cfg.n,
                                cfg.dictionary.d_min,
                                dictionary_priors(cfg.dictionary),
                                root.sub(kDictChild), direction);
  }();
  if (dict.dim() != cfg.n) {
    throw ConfigError("dictionary dimension does not match config n");
  }

  BackgroundModel background(
      Vector::Zero(cfg.n), background_covariance(cfg, root.sub(kBackgroundChild)),
      cfg.background.sigma2);

  std::optional<Vector> anomaly_signal;
  if (cfg.anomaly) {
    Vector direction;
    if (cfg.anomaly->fine_direction) {
      direction = fine_pattern(cfg.n);
    } else {
      Sampler sampler(root.sub(kAnomalyChild));
      direction = standard_normal_vector(cfg.n, sampler).normalized();
    }
    anomaly_signal = anomaly_at_distance(dict, cfg.anomaly->distance,
                                         direction);
  }

  DictionaryStats stats = make_dictionary_stats(dict);
  return Scenario{std::move(dict), stats, std::move(background),
                  std::move(anomaly_signal)};
}

namespace {

std::optional<AnomalySpec> anomaly_spec(const ExperimentConfig& cfg,
                                        const Scenario& scenario) {
  if (!cfg.anomaly || !scenario.anomaly_signal) return std::nullopt;
  return AnomalySpec{*scenario.anomaly_signal, cfg.anomaly->count};
}

// Downsampled measurements y_i = D(alpha f* + b)/c + w; the raw and whitened
// fields coincide (there is no whitening step on this path).  Location i
// consumes its substream exactly like the projected generator.
ObservationSet generate_downsampled(const Scene& scene,
                                    const BackgroundModel& bg,
                                    const DownsamplePlan& plan,
                                    RngStream stream) {
  ObservationSet obs;
  obs.raw.resize(scene.size());
  obs.whitened.resize(scene.size());
  const Eigen::Index n = plan.n;
  const bool colored = bg.lambda_max() > 0.0;
  for (int i = 0; i < scene.size(); ++i) {
    Sampler sampler(stream.sub(static_cast<std::uint64_t>(i)));
    Vector signal = scene.alphas[i] * scene.true_signals[i];
    if (colored) {
      signal += bg.covariance_sqrt() * standard_normal_vector(n, sampler);
    } else {
      standard_normal_vector(n, sampler);
    }
    signal += bg.mean();
    Vector y = downsample(signal, plan) / plan.scale;
    y += bg.sigma() * standard_normal_vector(plan.k, sampler);
    obs.whitened[i] = y;
    obs.raw[i] = std::move(y);
  }
  return obs;
}

struct DownsampledSetup {
  DownsamplePlan plan;
  Matrix g_cov;
  double scale = 1.0;
};

DownsampledSetup make_downsampled_setup(const ExperimentConfig& cfg,
                                        const Scenario& scenario, int k,
                                        RngStream phi_stream) {
  DownsampledSetup setup;
  setup.plan = DownsamplePlan::make(cfg.n, k);
  const Matrix phi =
      gaussian_matrix(k, cfg.n, 1.0 / static_cast<double>(k), phi_stream);
  setup.scale = snr_matching_scale(scenario.dict, phi, setup.plan);
  setup.plan.scale = setup.scale;

  // Covariance of y = D(f + b)/c + w given the signal: D Sigma D^T / c^2 +
  // sigma^2 I, assembled through the block-sum operator.
  Matrix d_op = Matrix::Zero(k, cfg.n);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index start = j * setup.plan.block;
    const Eigen::Index stop =
        std::min(start + setup.plan.block, static_cast<Eigen::Index>(cfg.n));
    for (Eigen::Index l = start; l < stop; ++l) d_op(j, l) = 1.0;
  }
  setup.g_cov = d_op * scenario.background.covariance() * d_op.transpose() /
                    (setup.scale * setup.scale) +
                cfg.background.sigma2 * Matrix::Identity(k, k);
  setup.g_cov = 0.5 * (setup.g_cov + setup.g_cov.transpose());
  return setup;
}

BoundInputs bound_inputs_for(const ExperimentConfig& cfg,
                             const Scenario& scenario, int k,
                             double alpha_min) {
  BoundInputs inputs;
  inputs.k = k;
  inputs.n = cfg.n;
  inputs.alpha_min = alpha_min;
  inputs.d_min = scenario.stats.d_min;
  inputs.p_min = scenario.stats.p_min;
  inputs.p_max = scenario.stats.p_max;
  inputs.epsilon = cfg.detector.bound_epsilon;
  return inputs;
}

}  // namespace

DsdTrialResult run_dsd_trial(const ExperimentConfig& cfg,
                             const Scenario& scenario, int k, Method method,
                             RngStream stream) {
  const bool known_alpha = cfg.alpha_mode == "known";
  const Scene scene =
      generate_scene(scenario.dict, cfg.locations, cfg.alpha_law_for(k),
                     anomaly_spec(cfg, scenario), stream.sub(1));

  std::vector<MapDecision> decisions(scene.size());
  if (method == Method::kDownsampleMap) {
    const DownsampledSetup setup =
        make_downsampled_setup(cfg, scenario, k, stream.sub(0));
    const ObservationSet obs = generate_downsampled(
        scene, scenario.background, setup.plan, stream.sub(2));
    const DownsampledMixture mixture(scenario.dict, k, setup.g_cov);
    for (int i = 0; i < scene.size(); ++i) {
      MapDecision d;
      d.location = i;
      d.label = mixture.classify(obs.whitened[i],
                                 scene.alphas[i] / setup.scale);
      decisions[i] = std::move(d);
    }
  } else {
    const SensingPlan plan =
        method == Method::kDesignedPhi
            ? SensingPlan::designed(
                  gaussian_matrix(k, cfg.n, 1.0 / static_cast<double>(k),
                                  stream.sub(0)),
                  scenario.background)
            : SensingPlan::random_phi(k, scenario.background, stream.sub(0));
    const ObservationSet obs =
        generate_observations(scene, plan, stream.sub(2));
    const ProjectedDictionary projected(plan.a(), scenario.dict);
    for (int i = 0; i < scene.size(); ++i) {
      const double alpha = known_alpha
                               ? scene.alphas[i]
                               : estimate_alpha_mle(obs.whitened[i]);
      decisions[i] = projected.classify(obs.whitened[i], alpha, i);
    }
  }

  DsdTrialResult result;
  result.alpha_min = scene.alpha_min();
  result.report =
      make_pfdr_report(decisions, scene, scenario.dict.size());
  const AchievableBound bound =
      achievable_pfdr_bound(bound_inputs_for(cfg, scenario, k,
                                             result.alpha_min),
                            scenario.background.lambda_max());
  result.bound = bound.value;
  result.conditions_ok = bound.conditions.positive_prob &&
                         bound.conditions.weak_background &&
                         bound.conditions.k_bound;
  return result;
}

AsdTrialResult run_asd_trial(const ExperimentConfig& cfg,
                             const Scenario& scenario, int k, Method method,
                             RngStream stream) {
  if (method != Method::kDesignedPhi && method != Method::kRandomPhi) {
    throw ConfigError("run_asd_trial: p-value pipeline needs a projection");
  }
  AsdTrialResult result;
  result.scene =
      generate_scene(scenario.dict, cfg.locations, cfg.alpha_law_for(k),
                     anomaly_spec(cfg, scenario), stream.sub(1));
  const SensingPlan plan =
      method == Method::kDesignedPhi
          ? SensingPlan::designed(
                gaussian_matrix(k, cfg.n, 1.0 / static_cast<double>(k),
                                stream.sub(0)),
                scenario.background)
          : SensingPlan::random_phi(k, scenario.background, stream.sub(0));
  const ObservationSet obs =
      generate_observations(result.scene, plan, stream.sub(2));

  const bool known_alpha = cfg.alpha_mode == "known";
  const AlphaMode alpha_mode =
      known_alpha ? AlphaMode::known(result.scene.alphas)
                  : AlphaMode::estimate(cfg.detector.zeta);
  result.report = run_asd(obs, plan, scenario.dict, cfg.detector.tau,
                          cfg.detector.epsilon, cfg.detector.delta,
                          alpha_mode);
  result.rates = empirical_rates(result.report, result.scene);
  if (!known_alpha) {
    double worst = 0.0;
    for (int i = 0; i < result.scene.size(); ++i) {
      const double hat = result.report.tests[i].alpha_used;
      const double truth = result.scene.alphas[i];
      const double miss =
          hat > 0.0 ? std::abs(truth / hat - 1.0)
                    : std::numeric_limits<double>::infinity();
      worst = std::max(worst, miss);
    }
    result.zeta_realized = worst;
  }
  return result;
}

RocTrialResult run_roc_trial(const ExperimentConfig& cfg,
                             const Scenario& scenario, int k, Method method,
                             RngStream stream) {
  const bool known_alpha = cfg.alpha_mode == "known";
  const Scene scene =
      generate_scene(scenario.dict, cfg.locations, cfg.alpha_law_for(k),
                     anomaly_spec(cfg, scenario), stream.sub(1));

  std::vector<double> statistics(scene.size());
  if (method == Method::kGlrtDownsample) {
    const DownsampledSetup setup =
        make_downsampled_setup(cfg, scenario, k, stream.sub(0));
    const ObservationSet obs = generate_downsampled(
        scene, scenario.background, setup.plan, stream.sub(2));
    const DownsampledMixture mixture(scenario.dict, k, setup.g_cov);
    for (int i = 0; i < scene.size(); ++i) {
      statistics[i] =
          mixture.score(obs.whitened[i], scene.alphas[i] / setup.scale);
    }
  } else {
    const SensingPlan plan =
        method == Method::kDesignedPhi
            ? SensingPlan::designed(
                  gaussian_matrix(k, cfg.n, 1.0 / static_cast<double>(k),
                                  stream.sub(0)),
                  scenario.background)
            : SensingPlan::random_phi(k, scenario.background, stream.sub(0));
    const ObservationSet obs = generate_observations(scene, plan, stream.sub(2));
    const ProjectedDictionary projected(plan.a(), scenario.dict);
    for (int i = 0; i < scene.size(); ++i) {
      const double alpha = known_alpha
                               ? scene.alphas[i]
                               : estimate_alpha_mle(obs.whitened[i]);
      statistics[i] = projected.statistic(obs.whitened[i], alpha);
    }
  }

  // Thresholds at evenly spaced order statistics, plus one past the maximum
  // so the sweep includes the empty rejection set.
  std::vector<double> sorted(statistics);
  std::sort(sorted.begin(), sorted.end());
  RocTrialResult result;
  const int points = cfg.detector.eta_points;
  result.eta.reserve(points + 1);
  for (int t = 0; t < points; ++t) {
    const std::size_t rank = static_cast<std::size_t>(
        std::llround(static_cast<double>(t) * (sorted.size() - 1) /
                     (points - 1)));
    result.eta.push_back(sorted[rank]);
  }
  result.eta.push_back(sorted.back() + 1.0);
  result.rates.reserve(result.eta.size());
  for (double eta : result.eta) {
    result.rates.push_back(
        rates_from_rejections(threshold_rejections(statistics, eta), scene));
  }
  return result;
}

namespace {

struct TrialKey {
  int k_index;
  int method_index;
  int trial;
};

RngStream trial_stream(const ExperimentConfig& cfg, const TrialKey& key) {
  return RngStream{cfg.seed, 0}
      .sub(kTrialChild)
      .sub(static_cast<std::uint64_t>(key.k_index))
      .sub(static_cast<std::uint64_t>(key.method_index))
      .sub(static_cast<std::uint64_t>(key.trial));
}

void write_metadata(const ExperimentConfig& cfg,
                    const std::filesystem::path& path) {
  json j;
  j["mode"] = to_string(cfg.mode);
  j["n"] = cfg.n;
  j["k_grid"] = cfg.k_grid;
  j["locations"] = cfg.locations;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  json methods = json::array();
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  j["written_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

RunResult run_bounds(const ExperimentConfig& cfg,
                     const std::filesystem::path& out_dir) {
  RunResult result;
  result.aggregate_csv = out_dir / "aggregate.csv";
  result.metadata_json = out_dir / "metadata.json";
  CsvWriter csv(result.aggregate_csv,
                {"alpha_min", "d_min", "p_min", "p_max", "k", "n", "epsilon",
                 "bound", "positive_prob", "k_bound", "lambda_threshold",
                 "k_min"});
  for (double alpha_min : cfg.bounds.alpha_min) {
    for (double d_min : cfg.bounds.d_min) {
      for (const auto& [p_min, p_max] : cfg.bounds.priors) {
        int k_min = -1;
        try {
          k_min = min_measurements(alpha_min, d_min, p_min, p_max);
        } catch (const InfeasibleError&) {
          k_min = -1;
        }
        for (int k : cfg.k_grid) {
          BoundInputs inputs;
          inputs.k = k;
          inputs.n = cfg.n;
          inputs.alpha_min = alpha_min;
          inputs.d_min = d_min;
          inputs.p_min = p_min;
          inputs.p_max = p_max;
          inputs.epsilon = cfg.detector.bound_epsilon;
          const AchievableBound bound = achievable_pfdr_bound(inputs);
          csv.field(alpha_min)
              .field(d_min)
              .field(p_min)
              .field(p_max)
              .field(k)
              .field(cfg.n)
              .field(inputs.epsilon)
              .field(bound.value)
              .field(bound.conditions.positive_prob ? 1 : 0)
              .field(bound.conditions.k_bound ? 1 : 0)
              .field(bound.conditions.lambda_max_threshold)
              .field(k_min);
          csv.end_row();
        }
      }
    }
  }
  write_metadata(cfg, result.metadata_json);
  return result;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  if (cfg.mode == Mode::kBounds) return run_bounds(cfg, out_dir);

  const Scenario scenario = build_scenario(cfg);
  RunResult result;
  result.per_trial_csv = out_dir / "per_trial.csv";
  result.aggregate_csv = out_dir / "aggregate.csv";
  result.metadata_json = out_dir / "metadata.json";

  const int num_k = static_cast<int>(cfg.k_grid.size());
  const int num_methods = static_cast<int>(cfg.methods.size());

  if (cfg.mode == Mode::kDsd) {
    std::vector<DsdTrialResult> trials(
        static_cast<std::size_t>(num_k) * num_methods * cfg.trials);
    const auto slot = [&](int ki, int mi, int t) {
      return (static_cast<std::size_t>(ki) * num_methods + mi) * cfg.trials +
             t;
    };
    parallel_for(static_cast<int>(trials.size()), cfg.threads, [&](int idx) {
      const int t = idx % cfg.trials;
      const int mi = (idx / cfg.trials) % num_methods;
      const int ki = idx / (cfg.trials * num_methods);
      trials[slot(ki, mi, t)] =
          run_dsd_trial(cfg, scenario, cfg.k_grid[ki], cfg.methods[mi],
                        trial_stream(cfg, {ki, mi, t}));
    });

    CsvWriter per_trial(result.per_trial_csv,
                        {"k", "method", "trial", "target_j", "empirical_pfdr",
                         "bound_value", "conditions_ok"});
    for (int ki = 0; ki < num_k; ++ki) {
      for (int mi = 0; mi < num_methods; ++mi) {
        for (int t = 0; t < cfg.trials; ++t) {
          const DsdTrialResult& r = trials[slot(ki, mi, t)];
          const std::string method = to_string(cfg.methods[mi]);
          for (int j = 0; j < scenario.dict.size(); ++j) {
            per_trial.field(cfg.k_grid[ki])
                .field(method)
                .field(t)
                .field(j)
                .field(r.report.per_target_pfdr[j])
                .field(r.bound)
                .field(r.conditions_ok ? 1 : 0);
            per_trial.end_row();
          }
          per_trial.field(cfg.k_grid[ki])
              .field(method)
              .field(t)
              .field(-1)
              .field(r.report.worst_defined ? r.report.worst_case
                                            : quiet_nan())
              .field(r.bound)
              .field(r.conditions_ok ? 1 : 0);
          per_trial.end_row();
        }
      }
    }

    CsvWriter aggregate(result.aggregate_csv,
                        {"k", "method", "target_j", "mean_pfdr", "stderr",
                         "trials_defined", "mean_bound", "conditions_ok"});
    for (int ki = 0; ki < num_k; ++ki) {
      for (int mi = 0; mi < num_methods; ++mi) {
        const std::string method = to_string(cfg.methods[mi]);
        std::vector<double> bounds(cfg.trials);
        bool all_ok = true;
        for (int t = 0; t < cfg.trials; ++t) {
          const DsdTrialResult& r = trials[slot(ki, mi, t)];
          bounds[t] = r.bound;
          all_ok = all_ok && r.conditions_ok;
        }
        const MeanStderr bound_stats = summarize(bounds);
        for (int j = -1; j < scenario.dict.size(); ++j) {
          std::vector<double> values(cfg.trials);
          for (int t = 0; t < cfg.trials; ++t) {
            const DsdTrialResult& r = trials[slot(ki, mi, t)];
            values[t] = j < 0 ? (r.report.worst_defined ? r.report.worst_case
                                                        : quiet_nan())
                              : r.report.per_target_pfdr[j];
          }
          const MeanStderr stats = summarize(values);
          aggregate.field(cfg.k_grid[ki])
              .field(method)
              .field(j)
              .field(stats.mean)
              .field(stats.stderr_)
              .field(stats.count)
              .field(bound_stats.mean)
              .field(all_ok ? 1 : 0);
          aggregate.end_row();
        }
      }
    }
  } else if (cfg.mode == Mode::kAsd) {
    std::vector<AsdTrialResult> trials(
        static_cast<std::size_t>(num_k) * num_methods * cfg.trials);
    const auto slot = [&](int ki, int mi, int t) {
      return (static_cast<std::size_t>(ki) * num_methods + mi) * cfg.trials +
             t;
    };
    parallel_for(static_cast<int>(trials.size()), cfg.threads, [&](int idx) {
      const int t = idx % cfg.trials;
      const int mi = (idx / cfg.trials) % num_methods;
      const int ki = idx / (cfg.trials * num_methods);
      trials[slot(ki, mi, t)] =
          run_asd_trial(cfg, scenario, cfg.k_grid[ki], cfg.methods[mi],
                        trial_stream(cfg, {ki, mi, t}));
    });

    CsvWriter per_trial(
        result.per_trial_csv,
        {"k", "method", "trial", "delta", "fdr", "fnr", "pd", "pf", "v", "r",
         "tau", "epsilon", "zeta", "zeta_realized", "seed"});
    for (int ki = 0; ki < num_k; ++ki) {
      for (int mi = 0; mi < num_methods; ++mi) {
        for (int t = 0; t < cfg.trials; ++t) {
          const AsdTrialResult& r = trials[slot(ki, mi, t)];
          per_trial.field(cfg.k_grid[ki])
              .field(to_string(cfg.methods[mi]))
              .field(t)
              .field(cfg.detector.delta)
              .field(r.rates.fdr)
              .field(r.rates.fnr)
              .field(r.rates.pd)
              .field(r.rates.pf)
              .field(r.rates.false_discoveries)
              .field(r.rates.rejections)
              .field(cfg.detector.tau)
              .field(cfg.detector.epsilon)
              .field(cfg.alpha_mode == "known" ? 0.0 : cfg.detector.zeta)
              .field(r.zeta_realized)
              .field(static_cast<long long>(cfg.seed));
          per_trial.end_row();
        }
      }
    }

    if (cfg.write_locations) {
      CsvWriter locations(out_dir / "locations.csv",
                          {"k", "method", "trial", "i", "d_i", "pvalue_bound",
                           "rejected", "gt"});
      for (int ki = 0; ki < num_k; ++ki) {
        for (int mi = 0; mi < num_methods; ++mi) {
          for (int t = 0; t < cfg.trials; ++t) {
            const AsdTrialResult& r = trials[slot(ki, mi, t)];
            std::vector<char> mask(r.scene.size(), 0);
            for (int loc : r.report.outcome.rejected) mask[loc] = 1;
            for (int i = 0; i < r.scene.size(); ++i) {
              locations.field(cfg.k_grid[ki])
                  .field(to_string(cfg.methods[mi]))
                  .field(t)
                  .field(i)
                  .field(r.report.tests[i].statistic)
                  .field(r.report.tests[i].pvalue_bound)
                  .field(mask[i] ? 1 : 0)
                  .field(r.scene.anomaly_mask[i] ? 1 : 0);
              locations.end_row();
            }
          }
        }
      }
    }

    CsvWriter aggregate(result.aggregate_csv,
                        {"k", "method", "delta", "mean_fdr", "stderr_fdr",
                         "mean_fnr", "mean_pd", "mean_pf",
                         "mean_zeta_realized", "trials"});
    for (int ki = 0; ki < num_k; ++ki) {
      for (int mi = 0; mi < num_methods; ++mi) {
        std::vector<double> fdr(cfg.trials), fnr(cfg.trials), pd(cfg.trials),
            pf(cfg.trials), zr(cfg.trials);
        for (int t = 0; t < cfg.trials; ++t) {
          const AsdTrialResult& r = trials[slot(ki, mi, t)];
          fdr[t] = r.rates.fdr;
          fnr[t] = r.rates.fnr;
          pd[t] = r.rates.pd;
          pf[t] = r.rates.pf;
          zr[t] = r.zeta_realized;
        }
        const MeanStderr fdr_stats = summarize(fdr);
        aggregate.field(cfg.k_grid[ki])
            .field(to_string(cfg.methods[mi]))
            .field(cfg.detector.delta)
            .field(fdr_stats.mean)
            .field(fdr_stats.stderr_)
            .field(summarize(fnr).mean)
            .field(summarize(pd).mean)
            .field(summarize(pf).mean)
            .field(summarize(zr).mean)
            .field(cfg.trials);
        aggregate.end_row();
      }
    }
  } else {  // Mode::kRoc
    std::vector<RocTrialResult> trials(
        static_cast<std::size_t>(num_k) * num_methods * cfg.trials);
    const auto slot = [&](int ki, int mi, int t) {
      return (static_cast<std::size_t>(ki) * num_methods + mi) * cfg.trials +
             t;
    };
    parallel_for(static_cast<int>(trials.size()), cfg.threads, [&](int idx) {
      const int t = idx % cfg.trials;
      const int mi = (idx / cfg.trials) % num_methods;
      const int ki = idx / (cfg.trials * num_methods);
      trials[slot(ki, mi, t)] =
          run_roc_trial(cfg, scenario, cfg.k_grid[ki], cfg.methods[mi],
                        trial_stream(cfg, {ki, mi, t}));
    });

    CsvWriter per_trial(result.per_trial_csv,
                        {"k", "method", "trial", "eta_index", "eta", "fdr",
                         "fnr", "pd", "pf"});
    const int grid = cfg.detector.eta_points + 1;
    for (int ki = 0; ki < num_k; ++ki) {
      for (int mi = 0; mi < num_methods; ++mi) {
        for (int t = 0; t < cfg.trials; ++t) {
          const RocTrialResult& r = trials[slot(ki, mi, t)];
          for (int e = 0; e < grid; ++e) {
            per_trial.field(cfg.k_grid[ki])
                .field(to_string(cfg.methods[mi]))
                .field(t)
                .field(e)
                .field(r.eta[e])
                .field(r.rates[e].fdr)
                .field(r.rates[e].fnr)
                .field(r.rates[e].pd)
                .field(r.rates[e].pf);
            per_trial.end_row();
          }
        }
      }
    }

    CsvWriter aggregate(result.aggregate_csv,
                        {"k", "method", "eta_index", "mean_eta", "mean_fdr",
                         "mean_fnr", "mean_pd", "mean_pf"});
    for (int ki = 0; ki < num_k; ++ki) {
      for (int mi = 0; mi < num_methods; ++mi) {
        for (int e = 0; e < grid; ++e) {
          std::vector<double> eta(cfg.trials), fdr(cfg.trials),
              fnr(cfg.trials), pd(cfg.trials), pf(cfg.trials);
          for (int t = 0; t < cfg.trials; ++t) {
            const RocTrialResult& r = trials[slot(ki, mi, t)];
            eta[t] = r.eta[e];
            fdr[t] = r.rates[e].fdr;
            fnr[t] = r.rates[e].fnr;
            pd[t] = r.rates[e].pd;
            pf[t] = r.rates[e].pf;
          }
          aggregate.field(cfg.k_grid[ki])
              .field(to_string(cfg.methods[mi]))
              .field(e)
              .field(summarize(eta).mean)
              .field(summarize(fdr).mean)
              .field(summarize(fnr).mean)
              .field(summarize(pd).mean)
              .field(summarize(pf).mean);
          aggregate.end_row();
        }
      }
    }
  }

  write_metadata(cfg, result.metadata_json);
  return result;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw ConfigError("emit_plot_data: missing column '" + name + "'");
  }
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
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
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

double field_as_double(const std::string& text) {
  return std::strtod(text.c_str(), nullptr);
}

}  // namespace

void emit_plot_data(const std::filesystem::path& aggregate_csv,
                    const std::filesystem::path& out_csv) {
  const CsvTable table = read_csv(aggregate_csv);
  CsvWriter out(out_csv, {"series", "method", "k", "x", "y", "stderr",
                          "bound"});
  const auto has = [&](const char* name) {
    return std::find(table.header.begin(), table.header.end(), name) !=
           table.header.end();
  };

  if (has("mean_pfdr")) {
    // dsd aggregate -> worst-case pFDR vs K per method.
    const int k_col = table.column("k");
    const int method_col = table.column("method");
    const int target_col = table.column("target_j");
    const int mean_col = table.column("mean_pfdr");
    const int err_col = table.column("stderr");
    const int bound_col = table.column("mean_bound");
    for (const auto& row : table.rows) {
      if (row[target_col] != "-1") continue;
      out.field(std::string("pfdr_vs_k"))
          .field(row[method_col])
          .field(row[k_col])
          .field(row[k_col])
          .field(row[mean_col])
          .field(row[err_col])
          .field(row[bound_col]);
      out.end_row();
    }
  } else if (has("eta_index")) {
    // roc aggregate -> pseudo-ROC (FDR, 1-FNR) and ROC (pf, pd) series.
    const int k_col = table.column("k");
    const int method_col = table.column("method");
    const int fdr_col = table.column("mean_fdr");
    const int fnr_col = table.column("mean_fnr");
    const int pd_col = table.column("mean_pd");
    const int pf_col = table.column("mean_pf");
    for (const auto& row : table.rows) {
      out.field(std::string("pseudo_roc"))
          .field(row[method_col])
          .field(row[k_col])
          .field(row[fdr_col])
          .field(format_double(1.0 - field_as_double(row[fnr_col])))
          .field(std::string(""))
          .field(std::string(""));
      out.end_row();
    }
    for (const auto& row : table.rows) {
      out.field(std::string("roc"))
          .field(row[method_col])
          .field(row[k_col])
          .field(row[pf_col])
          .field(row[pd_col])
          .field(std::string(""))
          .field(std::string(""));
      out.end_row();
    }
  } else if (has("mean_fdr")) {
    // asd aggregate -> single operating point per (method, K).
    const int k_col = table.column("k");
    const int method_col = table.column("method");
    const int fdr_col = table.column("mean_fdr");
    const int err_col = table.column("stderr_fdr");
    const int fnr_col = table.column("mean_fnr");
    for (const auto& row : table.rows) {
      out.field(std::string("operating_point"))
          .field(row[method_col])
          .field(row[k_col])
          .field(row[fdr_col])
          .field(format_double(1.0 - field_as_double(row[fnr_col])))
          .field(row[err_col])
          .field(std::string(""));
      out.end_row();
    }
  } else if (has("bound")) {
    // bounds table -> bound vs K per parameter combination.
    const int k_col = table.column("k");
    const int bound_col = table.column("bound");
    const int a_col = table.column("alpha_min");
    const int d_col = table.column("d_min");
    const int p_col = table.column("p_min");
    for (const auto& row : table.rows) {
      out.field(std::string("bound_vs_k"))
          .field("a=" + row[a_col] + ";d=" + row[d_col] + ";p=" + row[p_col])
          .field(row[k_col])
          .field(row[k_col])
          .field(row[bound_col])
          .field(std::string(""))
          .field(row[bound_col]);
      out.end_row();
    }
  } else {
    throw ConfigError("emit_plot_data: unrecognized aggregate schema");
  }
}

double pseudo_roc_area(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) {
    throw InvalidInputError("pseudo_roc_area: need matching nonempty series");
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  // Upper envelope: best y attainable at or below each x.
  double area = 0.0;
  double prev_x = 0.0;
  double env = 0.0;
  bool started = false;
  for (std::size_t idx : order) {
    const double xi = std::clamp(x[idx], 0.0, 1.0);
    if (!started) {
      env = y[idx];
      prev_x = xi;
      area += env * (xi - 0.0);
      started = true;
      continue;
    }
    if (xi > prev_x) {
      area += env * (xi - prev_x);
      prev_x = xi;
    }
    env = std::max(env, y[idx]);
  }
  area += env * (1.0 - prev_x);
  return area;
}

double roc_dominance_fraction(std::span<const double> xa,
                              std::span<const double> ya,
                              std::span<const double> xb,
                              std::span<const double> yb) {
  if (xa.size() != ya.size() || xb.size() != yb.size() || xb.empty() ||
      xa.empty()) {
    throw InvalidInputError("roc_dominance_fraction: bad series");
  }
  constexpr double kTol = 1e-12;
  int dominated = 0;
  for (std::size_t t = 0; t < xb.size(); ++t) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < xa.size(); ++s) {
      if (xa[s] <= xb[t] + kTol) best = std::max(best, ya[s]);
    }
    if (best >= yb[t] - kTol) ++dominated;
  }
  return static_cast<double>(dominated) / static_cast<double>(xb.size());
}

}  // namespace cdetect
