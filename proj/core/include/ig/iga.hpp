// Reference inference: one natural parameter per observation, moment-matching
// projections onto the factorized manifold, and damped Jacobi updates. Slow
// by design; it is the semantic baseline the fast path is checked against.
#pragma once

#include <cstdint>
#include <vector>

#include "ig/model.hpp"

namespace ig {

class LinearOperator;

// Natural parameterization of a factorized complex Gaussian: the linear
// coefficient theta (complex) and the per-variable precision shift nu
// (real, <= 0 throughout iteration).
struct NaturalParameter {
  CVec theta;
  RVec nu;
};

// Moment parameterization: mean and per-variable marginal variance.
struct GaussianBelief {
  CVec mean;
  RVec var;
};

struct IgaState {
  std::vector<NaturalParameter> per_obs;     // one parameter per observation
  NaturalParameter objective;                // the consensus parameter
  std::vector<NaturalParameter> projections; // last projection results
  double damping = 1.0;
  std::int64_t t = 0;
};

struct IgaTraceRow {
  std::int64_t t;
  double residual;
  double nu_min;
  double nu_max;
  double theta_norm;
};

struct IgaRunResult {
  IgaState state;
  GaussianBelief belief;
  std::vector<IgaTraceRow> trace;
  bool converged = false;
};

// mean_i = var_i * theta_i / 2, var_i = 1/(1/D_ii - nu_i).
// Throws state_error if any precision 1/D_ii - nu_i is nonpositive.
GaussianBelief belief_of(const NaturalParameter& np, const PriorModel& prior);

// Projects the rank-1-corrected Gaussian (prior x observation-n factor) back
// onto the factorized manifold by matching mean and marginal variances.
// gamma_n is the conjugated n-th operator row, y_n the n-th observation.
NaturalParameter m_project(const NaturalParameter& np_n, const CVec& gamma_n,
                           cxd y_n, const PriorModel& prior);

// One damped Jacobi sweep: projects every observation, forms the correction
// sum S = sum_n (projection_n - np_n), then
//   np_n    <- d*(S - xi_n) + (1-d)*np_n
//   objective <- d*S + (1-d)*objective.
IgaState iga_step(const IgaState& state, const LinearOperator& op,
                  const Observation& y, const PriorModel& prior);

// Iterates until the largest relative infinity-norm change across all
// parameters is <= tol, or max_iter sweeps. Throws divergence_error on
// non-finite iterates.
IgaRunResult iga_run(const LinearOperator& op, const Observation& y,
                     const PriorModel& prior, double damping,
                     std::int64_t max_iter, double tol);

// D-weighted mean misalignment between per-observation linear coefficients
// and the rescaled objective coefficient:
//   (1/(N M)) * sum_n sum_i D_ii |theta_n,i - ((N-1)/N) theta_0,i|^2.
// Requires at least two observations.
double consensus_error(const IgaState& state, const PriorModel& prior);

}  // namespace ig
