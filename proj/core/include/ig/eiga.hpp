// Fast inference with a single shared natural parameter: closed-form
// precision recursion plus a matrix-free linear-coefficient recursion that
// costs exactly one operator apply and one adjoint apply per iteration.
#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <vector>

#include "ig/iga.hpp"
#include "ig/model.hpp"

namespace ig {

class LinearOperator;

struct EigaState {
  CVec theta;   // shared linear coefficient
  RVec nu;      // shared precision shift (<= 0)
  RVec lambda;  // cache: lambda_i = 1/(1/D_ii - nu_i)
  double beta = 0.0;  // cache: virtual_noise_var + sum_i lambda_i
  double damping = 0.0;
  std::int64_t t = 0;
  // Run-scoped caches: the adjoint of the observation vector is computed
  // once (the per-iteration operator budget is exactly two evaluations),
  // and the noise/observation-count context travels with the state.
  CVec a_h_y;
  double virtual_noise_var = 0.0;
  std::int64_t n_obs = 0;
};

struct EigaTraceRow {
  std::int64_t t;
  double theta_residual;
  double nu_residual;
  double beta;
};

struct EigaResult {
  NaturalParameter objective_np;  // N/(N-1) times the shared parameter
  GaussianBelief belief;
  std::int64_t iterations = 0;
  bool converged = false;
  std::vector<EigaTraceRow> trace;
};

// The noise surrogate f(x) = x - sum_i D_ii x / (x + D_ii (N-1)).
// Monotone increasing in x with 0 < f(x) < x; requires M < n_obs.
double virtual_noise(double noise_var, const RVec& prior_variances,
                     std::int64_t n_obs);

// Recomputes lambda and beta from nu (and the virtual noise level).
void refresh_cache(EigaState& state, const PriorModel& prior);

// nu(t+1) = d * g(nu) + (1-d) * nu with g_i = -(N-1)/(beta - lambda_i).
RVec update_nu(const EigaState& state);

// theta(t+1) = (2/beta) J A^H y - (1/beta) J A^H A (lambda .* theta)
//              + (N J + (1 - d N) I) theta,
// with diagonal J_i = (d(N-1)/N) / (1 - lambda_i/beta). Exactly one apply
// and one adjoint_apply per call; A^H y comes from the state cache.
CVec update_theta(const EigaState& state, const LinearOperator& op,
                  const Observation& y);

// Runs from theta = 0, nu = 0 until both relative infinity-norm changes are
// <= tol or max_iter. damping defaults to 0.9 x the sharpest sufficient
// bound for the operator. Throws divergence_error on non-finite iterates and
// std::invalid_argument for damping outside (0, 1].
EigaResult eiga_run(const LinearOperator& op, const Observation& y,
                    const PriorModel& prior,
                    std::optional<double> damping = {},
                    std::int64_t max_iter = 2000, double tol = 1e-8);

void to_json(nlohmann::json& j, const EigaResult& r);

}  // namespace ig
