// Monte-Carlo experiment runner: scenario construction, estimator dispatch,
// NMSE aggregation, and deterministic file emission.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "ig/eiga.hpp"
#include "ig/iga.hpp"
#include "ig/model.hpp"
#include "ig/operators.hpp"

namespace ig {

struct ScenarioConfig {
  enum class Type { structured, dense_random };
  Type type = Type::structured;

  // structured: planar-array pilot operator with per-user clustered supports.
  std::int64_t n_rv = 4, n_rh = 4, n_p = 16;
  std::array<std::int64_t, 3> fine_factors{2, 2, 2};
  std::int64_t n_users = 1;
  std::vector<std::int64_t> phase_shifts;  // empty -> even spacing
  std::int64_t clusters_per_user = 2;
  std::int64_t cluster_width = 4;

  // dense_random: unit-magnitude random phases, full support.
  std::int64_t n_obs = 32, dim = 8;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  std::vector<double> snr_db{10.0};
  std::vector<std::string> estimators{"eiga"};  // subset of eiga | iga | mmse
  std::map<std::string, double> damping;        // absent -> per-instance default
  std::int64_t trials = 1;
  std::int64_t max_iter = 2000;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool measure_time = false;  // keep false for byte-identical outputs
  bool emit_traces = false;
  std::int64_t workers = 1;
};

struct ResultRecord {
  std::string estimator;
  double snr_db = 0.0;
  double nmse_db = 0.0;
  double mean_iterations = 0.0;
  double wall_time_per_iteration = 0.0;  // seconds; 0 unless measure_time
  std::int64_t trials = 0;
};

struct CellFailures {
  std::int64_t diverged = 0;
  std::int64_t not_converged = 0;
};

struct TraceFile {
  std::string name;                       // relative file name
  std::vector<std::string> lines;         // CSV rows incl. header
};

struct RunOutput {
  std::vector<ResultRecord> records;
  std::map<std::string, CellFailures> failures;  // key "estimator/snr_db"
  std::vector<TraceFile> traces;
  bool divergence_dominated = false;  // any cell with >= 50% diverged trials
};

// One fully-built problem instance (shared across estimators of a trial).
struct ProblemInstance {
  std::unique_ptr<LinearOperator> op;
  PriorModel prior;
  CVec h;
  Observation obs;
};

// Deterministic instance for (config.seed, snr index, trial index).
ProblemInstance build_problem(const ExperimentConfig& config,
                              std::int64_t snr_index, std::int64_t trial);

// Runs all (estimator, snr, trial) cells. Diverged trials are excluded from
// the NMSE mean and counted; throws if every trial of a cell diverged.
RunOutput run_experiment(const ExperimentConfig& config);

// 10 log10( mean_n |truth_n - est_n|^2 / |truth_n|^2 ), floored at -300 dB.
// Zero-norm truths are excluded with a warning on stderr.
double nmse(const std::vector<CVec>& estimates, const std::vector<CVec>& truths);

// Writes results.csv, summary.json, and (when present) trace CSVs under
// output_dir. All numbers are formatted with shortest-round-trip to_chars,
// so identical runs produce byte-identical files.
void emit(const RunOutput& output, const ExperimentConfig& config,
          const std::filesystem::path& output_dir);

ExperimentConfig config_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const ExperimentConfig& config);
void to_json(nlohmann::json& j, const ResultRecord& r);

// Shortest-round-trip decimal formatting (locale-independent).
std::string format_double(double v);

}  // namespace ig
