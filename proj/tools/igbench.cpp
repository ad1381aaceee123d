// igbench: experiment runner and diagnostics CLI for the ig library.
//
// Subcommands:
//   run          Monte-Carlo NMSE/iteration sweep, writes results.csv + summary.json
//   bounds       damping bounds and centered spectral radius of one instance
//   probe        fixed-dim, growing-N optimality probe (CSV on stdout)
//   fixed-point  precision-shift fixed point and spectrum report of one instance
//
// Exit codes: 0 ok; 2 bad arguments/config; 3 divergence-dominated run;
// 1 unexpected error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ig/analysis.hpp"
#include "ig/errors.hpp"
#include "ig/harness.hpp"
#include "ig/oracle.hpp"
#include "ig/version.hpp"

namespace {

ig::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return ig::ExperimentConfig{};
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  return ig::config_from_json(nlohmann::json::parse(in));
}

struct RunFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> estimators;
  std::vector<double> snr_db;
  std::optional<std::int64_t> trials;
  std::optional<std::int64_t> max_iter;
  std::optional<double> tol;
  std::vector<std::string> damping;  // name=value
  std::optional<std::int64_t> workers;
  bool measure_time = false;
  bool emit_traces = false;
};

void apply_damping_flags(ig::ExperimentConfig& config,
                         const std::vector<std::string>& entries) {
  for (const auto& entry : entries) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == entry.size())
      throw std::invalid_argument("--damping expects name=value, got '" + entry +
                                  "'");
    config.damping[entry.substr(0, eq)] = std::stod(entry.substr(eq + 1));
  }
}

int do_run(const RunFlags& flags) {
  ig::ExperimentConfig config = load_config(flags.config_path);
  if (!flags.out_dir.empty()) config.output_dir = flags.out_dir;
  if (flags.seed) config.seed = *flags.seed;
  if (!flags.estimators.empty()) config.estimators = flags.estimators;
  if (!flags.snr_db.empty()) config.snr_db = flags.snr_db;
  if (flags.trials) config.trials = *flags.trials;
  if (flags.max_iter) config.max_iter = *flags.max_iter;
  if (flags.tol) config.tol = *flags.tol;
  if (flags.workers) config.workers = *flags.workers;
  if (flags.measure_time) config.measure_time = true;
  if (flags.emit_traces) config.emit_traces = true;
  apply_damping_flags(config, flags.damping);

  const ig::RunOutput output = ig::run_experiment(config);
  ig::emit(output, config, config.output_dir);

  std::cout << "estimator,snr_db,nmse_db,mean_iterations,trials\n";
  for (const auto& r : output.records)
    std::cout << r.estimator << ',' << ig::format_double(r.snr_db) << ','
              << ig::format_double(r.nmse_db) << ','
              << ig::format_double(r.mean_iterations) << ',' << r.trials << '\n';
  std::cout << "wrote " << config.output_dir << "/results.csv and summary.json\n";

  if (output.divergence_dominated) {
    std::cerr << "warning: at least one cell had >= 50% diverged trials\n";
    return 3;
  }
  return 0;
}

int do_bounds(const std::string& config_path, std::uint64_t seed,
              std::int64_t snr_index, std::int64_t trial,
              std::optional<std::int64_t> k_users) {
  ig::ExperimentConfig config = load_config(config_path);
  config.seed = seed;
  const ig::ProblemInstance problem = ig::build_problem(config, snr_index, trial);

  nlohmann::json j;
  j["rows"] = problem.op->rows();
  j["cols"] = problem.op->cols();
  const auto method = problem.op->cols() <= 4096
                          ? ig::RadiusMethod::exact
                          : ig::RadiusMethod::power_iteration;
  j["rho_centered"] = ig::spectral_radius_centered(*problem.op, method);
  nlohmann::json bounds;
  ig::to_json(bounds, ig::damping_bounds(*problem.op, k_users));
  j["bounds"] = std::move(bounds);
  j["default_damping"] = ig::default_damping(*problem.op);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int do_probe(const std::string& family_name,
             const std::vector<std::string>& size_specs, double noise_var,
             std::int64_t seeds, std::uint64_t base_seed) {
  const ig::PriorFamily family = family_name == "unit_variance"
                                     ? ig::PriorFamily::unit_variance
                                     : ig::PriorFamily::log_uniform;
  std::vector<std::pair<std::int64_t, std::int64_t>> sizes;
  for (const auto& spec : size_specs) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("--size expects N:M, got '" + spec + "'");
    sizes.emplace_back(std::stoll(spec.substr(0, colon)),
                       std::stoll(spec.substr(colon + 1)));
  }

  const auto rows = ig::asymptotic_probe(family, sizes, noise_var, seeds,
                                         base_seed);
  std::cout << "n_obs,dim,mean_rel_err,max_lambda_star,f_beta_gap\n";
  for (const auto& r : rows)
    std::cout << r.n_obs << ',' << r.dim << ','
              << ig::format_double(r.mean_rel_err) << ','
              << ig::format_double(r.max_lambda_star) << ','
              << ig::format_double(r.f_beta_gap) << '\n';
  return 0;
}

int do_fixed_point(const std::string& config_path, std::uint64_t seed,
                   std::int64_t snr_index, std::int64_t trial,
                   std::optional<double> damping, double tol) {
  ig::ExperimentConfig config = load_config(config_path);
  config.seed = seed;
  const ig::ProblemInstance problem = ig::build_problem(config, snr_index, trial);
  // Not value_or: the default costs a spectral radius, so compute it lazily.
  const double d = damping ? *damping : ig::default_damping(*problem.op);

  const ig::RVec nu_star =
      ig::solve_nu_fixed_point(problem.prior, problem.op->rows(), tol);
  double beta = problem.prior.virtual_noise_var;
  for (std::int64_t i = 0; i < problem.prior.dim; ++i)
    beta += 1.0 / (1.0 / problem.prior.variances[i] - nu_star[i]);

  nlohmann::json j;
  j["dim"] = problem.prior.dim;
  j["n_obs"] = problem.op->rows();
  j["damping"] = d;
  j["nu_star_min"] = nu_star.minCoeff();
  j["nu_star_max"] = nu_star.maxCoeff();
  j["beta_star"] = beta;
  j["virtual_noise_var"] = problem.prior.virtual_noise_var;
  nlohmann::json report;
  ig::to_json(report, ig::convergence_report(*problem.op, problem.prior,
                                             nu_star, d));
  j["report"] = std::move(report);
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"igbench: matrix-free Bayesian channel-inference benchmarks"};
  app.set_version_flag("--version", std::string(ig::version));
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "run a Monte-Carlo experiment");
  run_cmd->add_option("--config", run_flags.config_path,
                      "JSON experiment config (defaults used when omitted)");
  run_cmd->add_option("--out", run_flags.out_dir, "output directory override");
  run_cmd->add_option("--seed", run_flags.seed, "base seed override");
  run_cmd->add_option("--estimators", run_flags.estimators,
                      "estimator subset (eiga, iga, mmse)")
      ->delimiter(',');
  run_cmd->add_option("--snr", run_flags.snr_db, "SNR grid in dB")
      ->delimiter(',');
  run_cmd->add_option("--trials", run_flags.trials, "trials per cell");
  run_cmd->add_option("--max-iter", run_flags.max_iter, "iteration cap");
  run_cmd->add_option("--tol", run_flags.tol, "convergence tolerance");
  run_cmd->add_option("--damping", run_flags.damping,
                      "damping override, name=value (repeatable)");
  run_cmd->add_option("--workers", run_flags.workers, "parallel trial workers");
  run_cmd->add_flag("--measure-time", run_flags.measure_time,
                    "record wall time per iteration (breaks byte-identical "
                    "outputs)");
  run_cmd->add_flag("--emit-traces", run_flags.emit_traces,
                    "write per-trial residual traces");

  std::string bounds_config;
  std::uint64_t bounds_seed = 0;
  std::int64_t bounds_snr_index = 0, bounds_trial = 0;
  std::optional<std::int64_t> bounds_k_users;
  CLI::App* bounds_cmd =
      app.add_subcommand("bounds", "damping bounds of one instance");
  bounds_cmd->add_option("--config", bounds_config, "JSON experiment config");
  bounds_cmd->add_option("--seed", bounds_seed, "base seed");
  bounds_cmd->add_option("--snr-index", bounds_snr_index, "SNR grid index");
  bounds_cmd->add_option("--trial", bounds_trial, "trial index");
  bounds_cmd->add_option("--k-users", bounds_k_users,
                         "override the user count of the multi-user bound");

  std::string probe_family = "log_uniform";
  std::vector<std::string> probe_sizes;
  double probe_noise_var = 0.01;
  std::int64_t probe_seeds = 5;
  std::uint64_t probe_seed = 0;
  CLI::App* probe_cmd =
      app.add_subcommand("probe", "growing-N optimality probe");
  probe_cmd
      ->add_option("--family", probe_family, "prior family")
      ->check(CLI::IsMember({"log_uniform", "unit_variance"}));
  probe_cmd
      ->add_option("--size", probe_sizes, "problem size N:M (repeatable)")
      ->required();
  probe_cmd->add_option("--noise-var", probe_noise_var, "true noise variance");
  probe_cmd->add_option("--seeds", probe_seeds, "instances per size");
  probe_cmd->add_option("--seed", probe_seed, "base seed");

  std::string fp_config;
  std::uint64_t fp_seed = 0;
  std::int64_t fp_snr_index = 0, fp_trial = 0;
  std::optional<double> fp_damping;
  double fp_tol = 1e-12;
  CLI::App* fp_cmd = app.add_subcommand(
      "fixed-point", "precision-shift fixed point and spectrum report");
  fp_cmd->add_option("--config", fp_config, "JSON experiment config");
  fp_cmd->add_option("--seed", fp_seed, "base seed");
  fp_cmd->add_option("--snr-index", fp_snr_index, "SNR grid index");
  fp_cmd->add_option("--trial", fp_trial, "trial index");
  fp_cmd->add_option("--damping", fp_damping,
                     "damping for the spectrum report (default 0.9x bound)");
  fp_cmd->add_option("--tol", fp_tol, "fixed-point solve tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return do_run(run_flags);
    if (bounds_cmd->parsed())
      return do_bounds(bounds_config, bounds_seed, bounds_snr_index,
                       bounds_trial, bounds_k_users);
    if (probe_cmd->parsed())
      return do_probe(probe_family, probe_sizes, probe_noise_var, probe_seeds,
                      probe_seed);
    if (fp_cmd->parsed())
      return do_fixed_point(fp_config, fp_seed, fp_snr_index, fp_trial,
                            fp_damping, fp_tol);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ig::divergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
