// Convergence diagnostics: the linear part of the coefficient update, its
// exact real spectrum via a diagonal similarity, fixed-point condition
// residuals, and large-N optimality probes.
#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <utility>
#include <vector>

#include "ig/eiga.hpp"
#include "ig/model.hpp"

namespace ig {

class LinearOperator;

struct ConvergenceReport {
  double rho_centered = 0.0;          // rho(N I - A^H A)
  double damping_bound_general = 0.0; // 2/(1 + rho/N)
  double eig_B_min = 0.0;             // spectrum extent of the undamped map
  double eig_B_max = 0.0;
  double eig_Btilde_max = 0.0;        // largest eigenvalue of the damped map
  double max_imag_part = 0.0;         // imaginary residue of the direct solve
  bool predicted_convergent = false;  // rho(damped map) < 1
};

// Dense linear part of the damped coefficient update at precision shift nu:
//   B~ = d * (N-1)/beta * T (I - A^H A / N) Diag(lambda) + (1-d) I,
// with diagonal T_i = 1/(1 - lambda_i/beta). Valid at any nu < 0; guard
// M <= 2048.
CMat iteration_matrix(const LinearOperator& op_dense, const PriorModel& prior,
                      const RVec& nu, double damping);

struct SpectrumResult {
  RVec eigenvalues;  // eigenvalues of the damped map, ascending, exact-real
  double max_imag;   // largest |imag| from a direct dense eigensolve
};

// Exact real spectrum of the damped update map at the precision-shift fixed
// point nu_star, via the diagonal similarity that makes the undamped map
// Hermitian: Q = S (N I - A^H A) S with S_i = sqrt(m1_i m3_i),
// m1_i = 1 - lambda_i/(D_ii N), m3_i = lambda_i/beta; then
// eig = d * eig(Q) + (1-d). The similarity is an identity only at nu_star.
// max_imag cross-checks with a direct non-symmetric eigensolve.
SpectrumResult eigs_of_iteration_matrix(const LinearOperator& op_dense,
                                        const PriorModel& prior,
                                        const RVec& nu_star, double damping);

// Convenience assembly of the report fields above.
ConvergenceReport convergence_report(const LinearOperator& op_dense,
                                     const PriorModel& prior,
                                     const RVec& nu_star, double damping);

struct FixedPointResiduals {
  // Stationarity of the objective sweep: the summed projection increments at
  // the shared parameter reproduce the objective parameter.
  double e_condition = 0.0;
  // Observation-averaged conditioned mean vs the output belief mean. The
  // average is the exact identity; individual conditioned means spread
  // O(1/N) around it at the shared parameter.
  double m_condition_mean = 0.0;
  // Worst per-observation conditioned-variance gap vs the output belief;
  // exact under constant-magnitude rows.
  double m_condition_var = 0.0;
};

// Residuals of the fixed-point conditions at a converged fast-method result;
// the per-observation beliefs are computed with the virtual noise level.
FixedPointResiduals fixed_point_residuals(const EigaResult& result,
                                          const LinearOperator& op,
                                          const Observation& y,
                                          const PriorModel& prior);

enum class PriorFamily { log_uniform, unit_variance };

struct ProbeRow {
  std::int64_t n_obs = 0;
  std::int64_t dim = 0;
  double mean_rel_err = 0.0;     // |mu_fixed_point - mu_exact| / |mu_exact|
  double max_lambda_star = 0.0;  // largest cached precision-inverse entry
  double f_beta_gap = 0.0;       // |f(beta*) - virtual noise|
};

// Fixed-dim, growing-N probe of asymptotic optimality: every column of the
// table is expected to shrink as N grows. Averages over `seeds` instances
// per size; deterministic per base_seed.
std::vector<ProbeRow> asymptotic_probe(
    PriorFamily family, const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes,
    double noise_var, std::int64_t seeds, std::uint64_t base_seed);

void to_json(nlohmann::json& j, const ConvergenceReport& r);
void to_json(nlohmann::json& j, const FixedPointResiduals& r);
void to_json(nlohmann::json& j, const ProbeRow& r);

}  // namespace ig
