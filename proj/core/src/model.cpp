#include "ig/model.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "ig/eiga.hpp"
#include "ig/errors.hpp"
#include "ig/operators.hpp"
#include "ig/rng.hpp"

namespace ig {

PowerSpec generate_power_spec(std::int64_t full_dim, std::int64_t n_clusters,
                              std::int64_t cluster_width, std::uint64_t seed) {
  if (full_dim < 1 || n_clusters < 1 || cluster_width < 1)
    throw std::invalid_argument("generate_power_spec: dimensions must be positive");
  if (n_clusters * cluster_width > full_dim)
    throw std::invalid_argument(
        "generate_power_spec: clusters do not fit into full_dim");
  if (n_clusters > 1 && cluster_width + 1 > full_dim / n_clusters)
    throw std::invalid_argument(
        "generate_power_spec: cluster_width must leave one empty cell per "
        "segment so runs cannot merge");

  Philox place(seed, Stream::cluster_placement);
  Philox values(seed, Stream::prior_powers);

  RVec powers = RVec::Zero(full_dim);
  const std::int64_t segment = full_dim / n_clusters;
  double total = 0.0;
  for (std::int64_t ci = 0; ci < n_clusters; ++ci) {
    const std::int64_t seg_start = ci * segment;
    // Final cluster may use the remainder cells; earlier clusters keep one
    // empty cell before their segment boundary so runs never merge.
    std::int64_t slack;
    if (ci == n_clusters - 1) {
      slack = (full_dim - seg_start) - cluster_width;
    } else {
      slack = segment - cluster_width - 1;
    }
    const std::int64_t offset = slack > 0 ? place.next_index(slack + 1) : 0;
    for (std::int64_t w = 0; w < cluster_width; ++w) {
      const double v = std::pow(10.0, 2.0 * values.next_double() - 1.0);
      powers[seg_start + offset + w] = v;
      total += v;
    }
  }
  powers *= static_cast<double>(n_clusters * cluster_width) / total;
  return PowerSpec{full_dim, std::move(powers), static_cast<std::int64_t>(seed)};
}

std::pair<PriorModel, std::vector<std::int64_t>> build_prior(
    const PowerSpec& spec, double noise_var, std::int64_t n_obs,
    bool calibrate_virtual_noise) {
  if (noise_var <= 0.0) throw std::invalid_argument("build_prior: noise_var must be > 0");
  if (n_obs < 1) throw std::invalid_argument("build_prior: n_obs must be >= 1");
  if (spec.powers.size() != spec.full_dim)
    throw std::invalid_argument("build_prior: powers length != full_dim");

  std::vector<std::int64_t> indices;
  for (std::int64_t i = 0; i < spec.full_dim; ++i) {
    if (spec.powers[i] < 0.0)
      throw std::invalid_argument("build_prior: negative power entry");
    if (spec.powers[i] > 0.0) indices.push_back(i);
  }
  if (indices.empty())
    throw std::invalid_argument("build_prior: power vector has no positive entry");

  const auto m = static_cast<std::int64_t>(indices.size());
  RVec variances(m);
  for (std::int64_t j = 0; j < m; ++j) variances[j] = spec.powers[indices[j]];

  PriorModel prior;
  prior.dim = m;
  prior.variances = std::move(variances);
  prior.noise_var = noise_var;
  prior.virtual_noise_var =
      calibrate_virtual_noise ? virtual_noise(noise_var, prior.variances, n_obs)
                              : noise_var;
  return {std::move(prior), std::move(indices)};
}

CVec sample_channel(const PriorModel& prior, std::uint64_t seed) {
  Philox gen(seed, Stream::channel);
  CVec h(prior.dim);
  for (std::int64_t i = 0; i < prior.dim; ++i)
    h[i] = gen.next_cnormal(prior.variances[i]);
  return h;
}

Observation observe(const LinearOperator& op, const CVec& h, double noise_var,
                    std::uint64_t seed) {
  if (h.size() != op.cols())
    throw std::invalid_argument("observe: channel length != operator columns");
  if (noise_var <= 0.0) throw std::invalid_argument("observe: noise_var must be > 0");
  Philox gen(seed, Stream::noise);
  CVec y = op.apply(h);
  for (Eigen::Index n = 0; n < y.size(); ++n) y[n] += gen.next_cnormal(noise_var);
  return Observation{std::move(y), op.rows()};
}

void to_json(nlohmann::json& j, const PowerSpec& spec) {
  j = nlohmann::json{{"full_dim", spec.full_dim},
                     {"powers", std::vector<double>(spec.powers.begin(), spec.powers.end())},
                     {"cluster_seed", spec.cluster_seed}};
}

void from_json(const nlohmann::json& j, PowerSpec& spec) {
  spec.full_dim = j.at("full_dim").get<std::int64_t>();
  const auto p = j.at("powers").get<std::vector<double>>();
  spec.powers = Eigen::Map<const RVec>(p.data(), static_cast<Eigen::Index>(p.size()));
  spec.cluster_seed = j.at("cluster_seed").get<std::int64_t>();
}

void to_json(nlohmann::json& j, const PriorModel& prior) {
  j = nlohmann::json{
      {"dim", prior.dim},
      {"variances", std::vector<double>(prior.variances.begin(), prior.variances.end())},
      {"noise_var", prior.noise_var},
      {"virtual_noise_var", prior.virtual_noise_var}};
}

void from_json(const nlohmann::json& j, PriorModel& prior) {
  prior.dim = j.at("dim").get<std::int64_t>();
  const auto v = j.at("variances").get<std::vector<double>>();
  prior.variances = Eigen::Map<const RVec>(v.data(), static_cast<Eigen::Index>(v.size()));
  prior.noise_var = j.at("noise_var").get<double>();
  prior.virtual_noise_var = j.at("virtual_noise_var").get<double>();
}

}  // namespace ig
