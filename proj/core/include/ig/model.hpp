// Problem construction: sparse power vectors, prior extraction, channel
// sampling and noisy observation synthesis for y = A h + z.
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <utility>
#include <vector>

namespace ig {

using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using cxd = std::complex<double>;

class LinearOperator;  // operators.hpp

// Per-variable power (variance) vector before zero-variance removal.
struct PowerSpec {
  std::int64_t full_dim = 0;  // pre-extraction dimension
  RVec powers;                // >= 0 elementwise, at least one positive
  std::int64_t cluster_seed = 0;
};

// Diagonal Gaussian prior plus noise levels of the estimation problem.
struct PriorModel {
  std::int64_t dim = 0;          // number of estimated variables M
  RVec variances;                // diagonal of D, > 0 elementwise
  double noise_var = 0.0;        // observation noise power
  double virtual_noise_var = 0.0;  // surrogate noise power used by EIGA
};

struct Observation {
  CVec y;
  std::int64_t n_obs = 0;  // N = y.size()
};

// Synthesizes a power vector whose support is n_clusters contiguous runs of
// cluster_width cells, one per equal segment of [0, full_dim); nonzero values
// are log-uniform in [0.1, 10], normalized to mean 1 over the support.
// Runs never touch (each non-final cluster keeps >= 1 empty cell before its
// segment boundary), so the support always has exactly n_clusters runs.
PowerSpec generate_power_spec(std::int64_t full_dim, std::int64_t n_clusters,
                              std::int64_t cluster_width, std::uint64_t seed);

// Drops zero-power variables and builds the prior. Returns the prior and the
// kept (strictly increasing) indices into the pre-extraction space. With
// calibrate_virtual_noise the virtual noise level is computed from the prior
// (requires M < n_obs); otherwise it equals noise_var.
std::pair<PriorModel, std::vector<std::int64_t>> build_prior(
    const PowerSpec& spec, double noise_var, std::int64_t n_obs,
    bool calibrate_virtual_noise);

// h_i ~ CN(0, D_ii), independent across i; deterministic per seed.
CVec sample_channel(const PriorModel& prior, std::uint64_t seed);

// y = A h + z with z_i ~ CN(0, noise_var); deterministic per seed.
Observation observe(const LinearOperator& op, const CVec& h, double noise_var,
                    std::uint64_t seed);

void to_json(nlohmann::json& j, const PowerSpec& spec);
void from_json(const nlohmann::json& j, PowerSpec& spec);
void to_json(nlohmann::json& j, const PriorModel& prior);
void from_json(const nlohmann::json& j, PriorModel& prior);

}  // namespace ig
