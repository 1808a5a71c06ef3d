// Command-line front end: config-driven Monte Carlo sweeps, dictionary
// synthesis, plot-table emission, and plan/dictionary verification.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cdetect/errors.hpp"
#include "cdetect/experiment.hpp"
#include "cdetect/io.hpp"
#include "cdetect/model.hpp"
#include "cdetect/numerics.hpp"
#include "cdetect/sensing.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

namespace fs = std::filesystem;

struct RunArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
  const cdetect::ExperimentConfig cfg =
      cdetect::load_experiment_config(args.config_path, overrides);
  const cdetect::RunResult result = cdetect::run_experiment(cfg, args.out_dir);
  std::cout << "aggregate: " << result.aggregate_csv.string() << '\n';
  if (!result.per_trial_csv.empty()) {
    std::cout << "per-trial: " << result.per_trial_csv.string() << '\n';
  }
  return kExitOk;
}

struct GenDictArgs {
  std::string out_path = "dictionary.json";
  int m = 9;
  int n = 106;
  double d_min = 0.05;
  std::uint64_t seed = 1;
  std::vector<double> priors;
  bool fine_pair = false;
};

int cmd_gen_dict(const GenDictArgs& args) {
  std::vector<double> priors = args.priors;
  if (priors.empty()) {
    priors.assign(args.m, 1.0 / args.m);
  } else {
    double sum = 0.0;
    for (double p : priors) sum += p;
    if (!(sum > 0.0)) throw cdetect::ConfigError("priors must be positive");
    for (double& p : priors) p /= sum;
  }
  std::optional<cdetect::Vector> direction;
  if (args.fine_pair) direction = cdetect::fine_pattern(args.n);
  const cdetect::Dictionary dict = cdetect::synthetic_dictionary(
      args.m, args.n, args.d_min, priors,
      cdetect::RngStream{args.seed, 0}, direction);
  cdetect::save_dictionary(dict, args.out_path);
  const cdetect::DictionaryStats stats = cdetect::make_dictionary_stats(dict);
  std::cout << "wrote " << args.out_path << " (m=" << dict.size()
            << ", n=" << dict.dim() << ", d_min=" << stats.d_min << ")\n";
  return kExitOk;
}

struct EmitArgs {
  std::string aggregate_csv;
  std::string out_csv = "series.csv";
};

int cmd_emit_plots(const EmitArgs& args) {
  cdetect::emit_plot_data(args.aggregate_csv, args.out_csv);
  std::cout << "wrote " << args.out_csv << '\n';
  return kExitOk;
}

struct VerifyArgs {
  std::string dict_path;
  int k = 0;
  double sigma2 = 1.0;
  double lambda_max = 0.0;
  double epsilon = 0.1;
  std::uint64_t seed = 1;
};

int cmd_verify(const VerifyArgs& args) {
  using cdetect::Matrix;
  using cdetect::Vector;

  const cdetect::Dictionary dict = cdetect::load_dictionary(args.dict_path);
  const cdetect::DictionaryStats stats = cdetect::make_dictionary_stats(dict);
  std::cout << "dictionary ok: m=" << dict.size() << " n=" << dict.dim()
            << " d_min=" << stats.d_min << " p_min=" << stats.p_min
            << " p_max=" << stats.p_max << '\n';
  if (args.k <= 0) return kExitOk;

  const Eigen::Index n = dict.dim();
  const cdetect::RngStream root{args.seed, 0};
  Matrix cov = Matrix::Zero(n, n);
  if (args.lambda_max > 0.0) {
    const Matrix g = cdetect::gaussian_matrix(n, n, 1.0, root.sub(0));
    cov = g * g.transpose();
    cov *= args.lambda_max / cdetect::spectral_norm(cov);
    cov = 0.5 * (cov + cov.transpose());
  }
  const cdetect::BackgroundModel bg(Vector::Zero(n), cov, args.sigma2);
  const Matrix a = cdetect::gaussian_matrix(args.k, n, 1.0 / args.k,
                                            root.sub(1));
  const cdetect::BackgroundTolerance tolerance =
      cdetect::check_background_tolerance(a, bg);
  std::cout << "background tolerance: lambda_max=" << tolerance.lambda_max
            << " threshold=" << tolerance.threshold
            << (tolerance.ok ? " OK" : " VIOLATED") << '\n';
  if (!tolerance.ok) return kExitNumerical;

  const cdetect::SensingPlan plan = cdetect::SensingPlan::designed(a, bg);
  const double op_defect =
      (plan.whitener() * plan.phi() - plan.a()).cwiseAbs().maxCoeff();
  const Matrix noise_cov =
      plan.phi() * cov * plan.phi().transpose() +
      args.sigma2 * Matrix::Identity(args.k, args.k);
  const double cov_defect =
      (plan.whitener() * noise_cov * plan.whitener().transpose() -
       Matrix::Identity(args.k, args.k))
          .cwiseAbs()
          .maxCoeff();
  std::cout << "whitening identities: |C*Phi - A|=" << op_defect
            << " |C*Sigma_y*C' - I|=" << cov_defect << '\n';

  const cdetect::DistanceCheck check = cdetect::verify_distance_preservation(
      plan.a(), dict.targets(), args.epsilon);
  std::cout << "distance preservation (eps=" << args.epsilon
            << "): ratios [" << check.worst_ratio_low << ", "
            << check.worst_ratio_high << "]"
            << (check.ok ? " OK" : " VIOLATED") << '\n';

  const bool pass = op_defect <= 1e-8 && cov_defect <= 1e-8 && check.ok;
  std::cout << (pass ? "verify: PASS" : "verify: FAIL") << '\n';
  return pass ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressive target and anomaly detection experiments"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run a configured experiment");
  run->add_option("--config", run_args.config_path, "JSON config path")
      ->required();
  run->add_option("--out", run_args.out_dir, "output directory");
  run->add_option("--set", run_args.overrides,
                  "config override key.path=value (repeatable)");
  std::uint64_t run_seed = 0;
  CLI::Option* seed_opt =
      run->add_option("--seed", run_seed, "override the config seed");

  GenDictArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-dict",
                                     "synthesize a dictionary JSON file");
  gen->add_option("--out", gen_args.out_path, "output path");
  gen->add_option("--m", gen_args.m, "number of targets");
  gen->add_option("--n", gen_args.n, "signal dimension");
  gen->add_option("--d-min", gen_args.d_min, "minimum pairwise distance");
  gen->add_option("--seed", gen_args.seed, "generation seed");
  gen->add_option("--priors", gen_args.priors,
                  "explicit priors (normalized; default equal)");
  gen->add_flag("--fine-pair", gen_args.fine_pair,
                "make the close pair differ along the fine pattern");

  EmitArgs emit_args;
  CLI::App* emit = app.add_subcommand("emit-plots",
                                      "project an aggregate table to series");
  emit->add_option("--aggregate", emit_args.aggregate_csv,
                   "aggregate.csv from a run")
      ->required();
  emit->add_option("--out", emit_args.out_csv, "output series CSV");

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand(
      "verify", "check dictionary and sensing-plan invariants");
  verify->add_option("--dict", verify_args.dict_path, "dictionary JSON")
      ->required();
  verify->add_option("--k", verify_args.k,
                     "measurement count for the plan check (0 = skip)");
  verify->add_option("--sigma2", verify_args.sigma2, "sensor variance");
  verify->add_option("--lambda-max", verify_args.lambda_max,
                     "background covariance largest eigenvalue");
  verify->add_option("--epsilon", verify_args.epsilon,
                     "distance-preservation tolerance");
  verify->add_option("--seed", verify_args.seed, "plan seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (seed_opt->count() > 0) run_args.seed = run_seed;
      return cmd_run(run_args);
    }
    if (gen->parsed()) return cmd_gen_dict(gen_args);
    if (emit->parsed()) return cmd_emit_plots(emit_args);
    if (verify->parsed()) return cmd_verify(verify_args);
  } catch (const cdetect::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cdetect::InvalidInputError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cdetect::BackgroundToleranceError& e) {
    std::cerr << "numerical failure: " << e.what() << " (lambda_max="
              << e.lambda_max() << ", threshold=" << e.threshold() << ")\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}
