#include "ig/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "ig/errors.hpp"
#include "ig/oracle.hpp"
#include "ig/rng.hpp"
#include "ig/version.hpp"

namespace ig {

namespace {

struct TrialOutcome {
  CVec estimate;
  std::int64_t iterations = 0;
  double seconds = 0.0;
  bool converged = false;
  bool diverged = false;
  std::vector<std::string> trace_lines;
};

bool known_estimator(const std::string& name) {
  return name == "eiga" || name == "iga" || name == "mmse";
}

void validate_config(const ExperimentConfig& config) {
  if (config.snr_db.empty())
    throw std::invalid_argument("config: snr_db must be nonempty");
  if (config.estimators.empty())
    throw std::invalid_argument("config: estimators must be nonempty");
  std::set<std::string> seen;
  for (const auto& name : config.estimators) {
    if (!known_estimator(name))
      throw std::invalid_argument("config: unknown estimator '" + name + "'");
    if (!seen.insert(name).second)
      throw std::invalid_argument("config: duplicate estimator '" + name + "'");
  }
  for (const auto& [name, value] : config.damping) {
    if (name != "eiga" && name != "iga")
      throw std::invalid_argument("config: damping override for '" + name +
                                  "' (only eiga and iga take damping)");
    if (!(value > 0.0 && value <= 1.0))
      throw std::invalid_argument("config: damping for '" + name +
                                  "' must be in (0, 1]");
  }
  if (config.trials < 1)
    throw std::invalid_argument("config: trials must be >= 1");
  if (config.max_iter < 1)
    throw std::invalid_argument("config: max_iter must be >= 1");
  if (!(config.tol > 0.0))
    throw std::invalid_argument("config: tol must be > 0");
  if (config.workers < 1)
    throw std::invalid_argument("config: workers must be >= 1");

  const ScenarioConfig& sc = config.scenario;
  if (sc.type == ScenarioConfig::Type::structured) {
    if (sc.n_rv < 1 || sc.n_rh < 1 || sc.n_p < 1)
      throw std::invalid_argument("config: array/pilot dimensions must be >= 1");
    for (const auto f : sc.fine_factors)
      if (f < 1)
        throw std::invalid_argument("config: fine factors must be >= 1");
    if (sc.n_users < 1)
      throw std::invalid_argument("config: n_users must be >= 1");
    if (sc.clusters_per_user < 1 || sc.cluster_width < 1)
      throw std::invalid_argument("config: cluster shape must be >= 1");
    const std::int64_t grid_delay = sc.fine_factors[2] * sc.n_p;
    if (grid_delay % sc.n_users != 0)
      throw std::invalid_argument(
          "config: delay grid must split evenly across users");
    if (!sc.phase_shifts.empty() &&
        static_cast<std::int64_t>(sc.phase_shifts.size()) != sc.n_users)
      throw std::invalid_argument(
          "config: phase_shifts must list one shift per user");
  } else {
    if (sc.n_obs < 2)
      throw std::invalid_argument("config: dense scenario needs n_obs >= 2");
    if (sc.dim < 1)
      throw std::invalid_argument("config: dense scenario needs dim >= 1");
  }
}

TrialOutcome run_estimator(const std::string& name,
                           const ExperimentConfig& config,
                           const ProblemInstance& problem) {
  TrialOutcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (name == "eiga") {
      std::optional<double> damping;
      if (const auto it = config.damping.find("eiga"); it != config.damping.end())
        damping = it->second;
      const EigaResult r = eiga_run(*problem.op, problem.obs, problem.prior,
                                    damping, config.max_iter, config.tol);
      out.estimate = r.belief.mean;
      out.iterations = r.iterations;
      out.converged = r.converged;
      if (config.emit_traces) {
        out.trace_lines.push_back("t,theta_residual,nu_residual,beta");
        for (const auto& row : r.trace)
          out.trace_lines.push_back(
              std::to_string(row.t) + "," + format_double(row.theta_residual) +
              "," + format_double(row.nu_residual) + "," +
              format_double(row.beta));
      }
    } else if (name == "iga") {
      // Only fall back to the default when no override is configured; the
      // default costs a spectral radius per call.
      double damping;
      if (const auto it = config.damping.find("iga"); it != config.damping.end())
        damping = it->second;
      else
        damping = default_damping(*problem.op);
      const IgaRunResult r = iga_run(*problem.op, problem.obs, problem.prior,
                                     damping, config.max_iter, config.tol);
      out.estimate = r.belief.mean;
      out.iterations = r.state.t;
      out.converged = r.converged;
      if (config.emit_traces) {
        out.trace_lines.push_back("t,residual,nu_min,nu_max,theta_norm");
        for (const auto& row : r.trace)
          out.trace_lines.push_back(
              std::to_string(row.t) + "," + format_double(row.residual) + "," +
              format_double(row.nu_min) + "," + format_double(row.nu_max) +
              "," + format_double(row.theta_norm));
      }
    } else {  // mmse
      out.estimate = mmse(*problem.op, problem.prior, problem.obs).mean;
      out.converged = true;
    }
  } catch (const divergence_error& e) {
    out.diverged = true;
    out.converged = false;
    out.iterations = e.iteration;
  }
  if (config.measure_time)
    out.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  return out;
}

}  // namespace

ProblemInstance build_problem(const ExperimentConfig& config,
                              std::int64_t snr_index, std::int64_t trial) {
  if (snr_index < 0 ||
      snr_index >= static_cast<std::int64_t>(config.snr_db.size()))
    throw std::invalid_argument("build_problem: snr_index out of range");
  if (trial < 0 || trial >= config.trials)
    throw std::invalid_argument("build_problem: trial out of range");

  const double noise_var = std::pow(10.0, -config.snr_db[snr_index] / 10.0);
  const std::uint64_t instance_seed =
      derive_seed(config.seed, static_cast<std::uint64_t>(snr_index),
                  static_cast<std::uint64_t>(trial));
  const ScenarioConfig& sc = config.scenario;

  ProblemInstance problem;
  if (sc.type == ScenarioConfig::Type::structured) {
    const std::int64_t grid_v = sc.fine_factors[0] * sc.n_rv;
    const std::int64_t grid_h = sc.fine_factors[1] * sc.n_rh;
    const std::int64_t grid_delay = sc.fine_factors[2] * sc.n_p;
    const std::int64_t n_angle = grid_v * grid_h;
    if (grid_delay % sc.n_users != 0)
      throw std::invalid_argument(
          "build_problem: delay grid must split evenly across users");
    const std::int64_t window = grid_delay / sc.n_users;

    std::vector<std::int64_t> shifts = sc.phase_shifts;
    if (shifts.empty()) {
      shifts.reserve(static_cast<std::size_t>(sc.n_users));
      for (std::int64_t k = 0; k < sc.n_users; ++k) shifts.push_back(k * window);
    } else if (static_cast<std::int64_t>(shifts.size()) != sc.n_users) {
      throw std::invalid_argument(
          "build_problem: phase_shifts must list one shift per user");
    }

    // Each user's clustered support is drawn inside a delay window at the
    // origin; the user's pilot phase ramp then rotates it to its own window.
    PowerSpec combined;
    combined.full_dim = grid_delay * n_angle;
    combined.powers = RVec::Zero(combined.full_dim);
    combined.cluster_seed = static_cast<std::int64_t>(instance_seed);
    for (std::int64_t k = 0; k < sc.n_users; ++k) {
      const std::uint64_t user_seed =
          derive_seed(instance_seed, static_cast<std::uint64_t>(k));
      const PowerSpec local =
          generate_power_spec(window * n_angle, sc.clusters_per_user,
                              sc.cluster_width, user_seed);
      for (std::int64_t l = 0; l < local.full_dim; ++l) {
        if (local.powers[l] == 0.0) continue;
        const std::int64_t delay_local = l / n_angle;
        const std::int64_t angle = l % n_angle;
        const std::int64_t delay =
            (delay_local + shifts[static_cast<std::size_t>(k)]) % grid_delay;
        combined.powers[delay * n_angle + angle] += local.powers[l];
      }
    }

    const std::int64_t n_rows = sc.n_rv * sc.n_rh * sc.n_p;
    auto [prior, extraction] = build_prior(combined, noise_var, n_rows, true);
    problem.op = build_structured(sc.n_rv, sc.n_rh, sc.n_p, sc.fine_factors,
                                  std::move(shifts), std::move(extraction));
    problem.prior = std::move(prior);
  } else {
    Philox phases(instance_seed, Stream::dense_phases);
    CMat entries(sc.n_obs, sc.dim);
    for (std::int64_t c = 0; c < sc.dim; ++c)
      for (std::int64_t r = 0; r < sc.n_obs; ++r)
        entries(r, c) =
            std::polar(1.0, 2.0 * std::numbers::pi * phases.next_double());

    Philox powers(instance_seed, Stream::prior_powers);
    RVec pw(sc.dim);
    double total = 0.0;
    for (std::int64_t i = 0; i < sc.dim; ++i) {
      pw[i] = std::pow(10.0, 2.0 * powers.next_double() - 1.0);
      total += pw[i];
    }
    pw *= static_cast<double>(sc.dim) / total;

    PowerSpec spec{sc.dim, std::move(pw),
                   static_cast<std::int64_t>(instance_seed)};
    auto [prior, extraction] =
        build_prior(spec, noise_var, sc.n_obs, sc.dim < sc.n_obs);
    problem.op = std::make_unique<DenseOperator>(std::move(entries), true);
    problem.prior = std::move(prior);
  }

  problem.h = sample_channel(problem.prior, instance_seed);
  problem.obs = observe(*problem.op, problem.h, noise_var, instance_seed);
  return problem;
}

RunOutput run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const std::int64_t n_snr = static_cast<std::int64_t>(config.snr_db.size());
  const std::int64_t n_est = static_cast<std::int64_t>(config.estimators.size());

  // outcomes[snr][estimator][trial]; filled by index so worker order is moot.
  std::vector<std::vector<std::vector<TrialOutcome>>> outcomes(
      static_cast<std::size_t>(n_snr),
      std::vector<std::vector<TrialOutcome>>(
          static_cast<std::size_t>(n_est),
          std::vector<TrialOutcome>(static_cast<std::size_t>(config.trials))));
  std::vector<std::vector<CVec>> truths(
      static_cast<std::size_t>(n_snr),
      std::vector<CVec>(static_cast<std::size_t>(config.trials)));

  const auto run_trial = [&](std::int64_t s, std::int64_t t) {
    const ProblemInstance problem = build_problem(config, s, t);
    truths[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)] = problem.h;
    for (std::int64_t e = 0; e < n_est; ++e)
      outcomes[static_cast<std::size_t>(s)][static_cast<std::size_t>(e)]
              [static_cast<std::size_t>(t)] = run_estimator(
                  config.estimators[static_cast<std::size_t>(e)], config, problem);
  };

  for (std::int64_t s = 0; s < n_snr; ++s) {
    if (config.workers == 1) {
      for (std::int64_t t = 0; t < config.trials; ++t) run_trial(s, t);
      continue;
    }
    for (std::int64_t start = 0; start < config.trials;
         start += config.workers) {
      const std::int64_t stop = std::min(start + config.workers, config.trials);
      std::vector<std::future<void>> batch;
      batch.reserve(static_cast<std::size_t>(stop - start));
      for (std::int64_t t = start; t < stop; ++t)
        batch.push_back(
            std::async(std::launch::async, [&run_trial, s, t] { run_trial(s, t); }));
      for (auto& f : batch) f.get();
    }
  }

  RunOutput out;
  for (std::int64_t e = 0; e < n_est; ++e) {
    const std::string& name = config.estimators[static_cast<std::size_t>(e)];
    for (std::int64_t s = 0; s < n_snr; ++s) {
      const auto& cell =
          outcomes[static_cast<std::size_t>(s)][static_cast<std::size_t>(e)];
      const std::string key =
          name + "/" + format_double(config.snr_db[static_cast<std::size_t>(s)]);

      CellFailures fail;
      std::vector<CVec> estimates, cell_truths;
      double iter_sum = 0.0;
      double sec_sum = 0.0;
      std::int64_t worst_iteration = 0;
      for (std::int64_t t = 0; t < config.trials; ++t) {
        const TrialOutcome& trial = cell[static_cast<std::size_t>(t)];
        if (trial.diverged) {
          fail.diverged += 1;
          worst_iteration = std::max(worst_iteration, trial.iterations);
          continue;
        }
        if (!trial.converged) fail.not_converged += 1;
        estimates.push_back(trial.estimate);
        cell_truths.push_back(
            truths[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)]);
        iter_sum += static_cast<double>(trial.iterations);
        sec_sum += trial.seconds;
      }

      if (estimates.empty())
        throw divergence_error("run_experiment: every trial diverged in cell " + key,
                               worst_iteration);
      if (2 * fail.diverged >= config.trials) out.divergence_dominated = true;

      ResultRecord record;
      record.estimator = name;
      record.snr_db = config.snr_db[static_cast<std::size_t>(s)];
      record.nmse_db = nmse(estimates, cell_truths);
      record.trials = static_cast<std::int64_t>(estimates.size());
      record.mean_iterations = iter_sum / static_cast<double>(record.trials);
      if (config.measure_time)
        record.wall_time_per_iteration =
            iter_sum > 0.0 ? sec_sum / iter_sum
                           : sec_sum / static_cast<double>(record.trials);
      out.records.push_back(std::move(record));
      out.failures[key] = fail;

      for (std::int64_t t = 0; t < config.trials; ++t) {
        const TrialOutcome& trial = cell[static_cast<std::size_t>(t)];
        if (trial.trace_lines.empty()) continue;
        TraceFile tf;
        tf.name = "trace_" + name + "_snr" +
                  format_double(config.snr_db[static_cast<std::size_t>(s)]) +
                  "_trial" + std::to_string(t) + ".csv";
        tf.lines = trial.trace_lines;
        out.traces.push_back(std::move(tf));
      }
    }
  }
  return out;
}

double nmse(const std::vector<CVec>& estimates, const std::vector<CVec>& truths) {
  if (estimates.empty() || estimates.size() != truths.size())
    throw std::invalid_argument("nmse: estimate/truth lists must match and be nonempty");
  double acc = 0.0;
  std::int64_t counted = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double t2 = truths[i].squaredNorm();
    if (t2 == 0.0) {
      std::cerr << "nmse: skipping zero-norm truth at index " << i << "\n";
      continue;
    }
    acc += (estimates[i] - truths[i]).squaredNorm() / t2;
    counted += 1;
  }
  if (counted == 0)
    throw std::invalid_argument("nmse: every truth had zero norm");
  const double ratio = acc / static_cast<double>(counted);
  if (!(ratio > 1e-30)) return -300.0;
  return std::max(10.0 * std::log10(ratio), -300.0);
}

void emit(const RunOutput& output, const ExperimentConfig& config,
          const std::filesystem::path& output_dir) {
  std::filesystem::create_directories(output_dir);

  {
    std::ofstream csv(output_dir / "results.csv", std::ios::binary);
    if (!csv)
      throw std::runtime_error("emit: cannot open results.csv for writing");
    csv << "estimator,snr_db,nmse_db,mean_iterations,wall_time_per_iteration,"
           "trials\n";
    for (const auto& r : output.records)
      csv << r.estimator << ',' << format_double(r.snr_db) << ','
          << format_double(r.nmse_db) << ',' << format_double(r.mean_iterations)
          << ',' << format_double(r.wall_time_per_iteration) << ',' << r.trials
          << '\n';
  }

  nlohmann::json j;
  j["config"] = config;
  j["records"] = output.records;
  nlohmann::json failures = nlohmann::json::object();
  for (const auto& [key, f] : output.failures)
    failures[key] = {{"diverged", f.diverged}, {"not_converged", f.not_converged}};
  j["failures"] = std::move(failures);
  j["divergence_dominated"] = output.divergence_dominated;
  j["version"] = version;
  j["git"] = git_describe;
  {
    std::ofstream js(output_dir / "summary.json", std::ios::binary);
    if (!js)
      throw std::runtime_error("emit: cannot open summary.json for writing");
    js << j.dump(2) << '\n';
  }

  if (!output.traces.empty()) {
    const std::filesystem::path trace_dir = output_dir / "traces";
    std::filesystem::create_directories(trace_dir);
    for (const auto& tf : output.traces) {
      std::ofstream f(trace_dir / tf.name, std::ios::binary);
      if (!f)
        throw std::runtime_error("emit: cannot open trace file " + tf.name);
      for (const auto& line : tf.lines) f << line << '\n';
    }
  }
}

namespace {

void require_keys(const nlohmann::json& j,
                  std::initializer_list<const char*> allowed,
                  const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " +
                                  where);
  }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw std::invalid_argument("config: root must be a JSON object");
  require_keys(j,
               {"scenario", "snr_db", "estimators", "damping", "trials",
                "max_iter", "tol", "seed", "output_dir", "measure_time",
                "emit_traces", "workers"},
               "root");

  ExperimentConfig c;
  if (j.contains("scenario")) {
    const nlohmann::json& s = j.at("scenario");
    if (!s.is_object())
      throw std::invalid_argument("config: scenario must be a JSON object");
    require_keys(s,
                 {"type", "n_rv", "n_rh", "n_p", "fine_factors", "n_users",
                  "phase_shifts", "clusters_per_user", "cluster_width",
                  "n_obs", "dim"},
                 "scenario");
    const std::string type = s.value("type", std::string("structured"));
    if (type == "structured")
      c.scenario.type = ScenarioConfig::Type::structured;
    else if (type == "dense_random")
      c.scenario.type = ScenarioConfig::Type::dense_random;
    else
      throw std::invalid_argument(
          "config: scenario type must be 'structured' or 'dense_random'");
    c.scenario.n_rv = s.value("n_rv", c.scenario.n_rv);
    c.scenario.n_rh = s.value("n_rh", c.scenario.n_rh);
    c.scenario.n_p = s.value("n_p", c.scenario.n_p);
    if (s.contains("fine_factors")) {
      const auto fine = s.at("fine_factors").get<std::vector<std::int64_t>>();
      if (fine.size() != 3)
        throw std::invalid_argument(
            "config: fine_factors must have exactly 3 entries");
      std::copy(fine.begin(), fine.end(), c.scenario.fine_factors.begin());
    }
    c.scenario.n_users = s.value("n_users", c.scenario.n_users);
    c.scenario.phase_shifts =
        s.value("phase_shifts", c.scenario.phase_shifts);
    c.scenario.clusters_per_user =
        s.value("clusters_per_user", c.scenario.clusters_per_user);
    c.scenario.cluster_width = s.value("cluster_width", c.scenario.cluster_width);
    c.scenario.n_obs = s.value("n_obs", c.scenario.n_obs);
    c.scenario.dim = s.value("dim", c.scenario.dim);
  }

  c.snr_db = j.value("snr_db", c.snr_db);
  c.estimators = j.value("estimators", c.estimators);
  if (j.contains("damping")) {
    const nlohmann::json& d = j.at("damping");
    if (!d.is_object())
      throw std::invalid_argument("config: damping must be a JSON object");
    for (auto it = d.begin(); it != d.end(); ++it)
      c.damping[it.key()] = it.value().get<double>();
  }
  c.trials = j.value("trials", c.trials);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.tol = j.value("tol", c.tol);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.measure_time = j.value("measure_time", c.measure_time);
  c.emit_traces = j.value("emit_traces", c.emit_traces);
  c.workers = j.value("workers", c.workers);
  return c;
}

void to_json(nlohmann::json& j, const ExperimentConfig& config) {
  const ScenarioConfig& sc = config.scenario;
  nlohmann::json scenario{
      {"type", sc.type == ScenarioConfig::Type::structured ? "structured"
                                                           : "dense_random"},
      {"n_rv", sc.n_rv},
      {"n_rh", sc.n_rh},
      {"n_p", sc.n_p},
      {"fine_factors", sc.fine_factors},
      {"n_users", sc.n_users},
      {"phase_shifts", sc.phase_shifts},
      {"clusters_per_user", sc.clusters_per_user},
      {"cluster_width", sc.cluster_width},
      {"n_obs", sc.n_obs},
      {"dim", sc.dim}};
  j = nlohmann::json{{"scenario", std::move(scenario)},
                     {"snr_db", config.snr_db},
                     {"estimators", config.estimators},
                     {"damping", config.damping},
                     {"trials", config.trials},
                     {"max_iter", config.max_iter},
                     {"tol", config.tol},
                     {"seed", config.seed},
                     {"output_dir", config.output_dir},
                     {"measure_time", config.measure_time},
                     {"emit_traces", config.emit_traces},
                     {"workers", config.workers}};
}

void to_json(nlohmann::json& j, const ResultRecord& r) {
  j = nlohmann::json{{"estimator", r.estimator},
                     {"snr_db", r.snr_db},
                     {"nmse_db", r.nmse_db},
                     {"mean_iterations", r.mean_iterations},
                     {"wall_time_per_iteration", r.wall_time_per_iteration},
                     {"trials", r.trials}};
}

std::string format_double(double v) {
  std::array<char, 64> buf;
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc())
    throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), ptr);
}

}  // namespace ig
