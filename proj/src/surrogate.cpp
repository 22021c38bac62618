#include "sldais/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sldais/sampling.hpp"

namespace sldais {

surrogate_likelihood surrogate_likelihood::init_rand(const dataset& data,
                                                     std::size_t n_surr,
                                                     std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n_surr < 1 || n_surr > n) {
    throw ad::usage_error("n_surr must lie in [1, " + std::to_string(n) +
                          "], got " + std::to_string(n_surr));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx = sample_minibatch(n, n_surr, rng);
  const double w = static_cast<double>(n) / static_cast<double>(n_surr);
  return from_indices(
      data, std::move(idx),
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_surr),
                                std::log(w)));
}

surrogate_likelihood surrogate_likelihood::from_points(
    dataset points, const Eigen::VectorXd& weights, std::size_t n_data,
    std::vector<std::size_t> indices) {
  if (weights.size() != static_cast<Eigen::Index>(points.size())) {
    throw ad::usage_error("surrogate weight count does not match points");
  }
  if ((weights.array() <= 0.0).any()) {
    throw ad::usage_error("surrogate weights must be positive");
  }
  surrogate_likelihood s;
  s.indices = std::move(indices);
  s.points = std::move(points);
  s.raw_log_weights = weights.array().log().matrix();
  s.n_data = n_data;
  return s;
}

surrogate_likelihood surrogate_likelihood::from_indices(
    const dataset& data, std::vector<std::size_t> indices,
    Eigen::VectorXd raw_log_weights) {
  if (indices.empty()) {
    throw ad::usage_error("surrogate needs at least one point");
  }
  if (raw_log_weights.size() != static_cast<Eigen::Index>(indices.size())) {
    throw ad::usage_error("surrogate weight count does not match indices");
  }
  surrogate_likelihood s;
  s.points = data.subset(indices);
  s.indices = std::move(indices);
  s.raw_log_weights = std::move(raw_log_weights);
  s.n_data = data.size();
  return s;
}

ad::var surrogate_loglik(const model_terms& terms,
                         const surrogate_likelihood& s, ad::var z,
                         ad::var raw_log_weights) {
  return terms.log_lik(s.points, z, ad::exp(raw_log_weights));
}

ad::var surrogate_score(const model_terms& terms,
                        const surrogate_likelihood& s, ad::var z,
                        ad::var raw_log_weights) {
  return terms.lik_score(s.points, z, ad::exp(raw_log_weights));
}

double surrogate_loglik(const surrogate_likelihood& s,
                        const model_density& model, const Eigen::VectorXd& z) {
  ad::tape t;
  model_terms terms(t, model);
  return surrogate_loglik(terms, s, t.constant(z),
                          t.constant(s.raw_log_weights))
      .scalar();
}

nlohmann::json to_json(const surrogate_likelihood& s) {
  nlohmann::json j;
  j["indices"] = s.indices;
  j["raw_log_weights"] = std::vector<double>(
      s.raw_log_weights.data(),
      s.raw_log_weights.data() + s.raw_log_weights.size());
  return j;
}

}  // namespace sldais
