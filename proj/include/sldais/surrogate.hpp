#pragma once

// Weighted-subset surrogate log likelihood:
//   surrogate_loglik(z) = sum_n w_n log p(y~_n | z, x~_n),  w = exp(raw).
// It only steers the annealed dynamics; it never replaces the final
// likelihood term of an estimator.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sldais/autodiff.hpp"
#include "sldais/model.hpp"

namespace sldais {

struct surrogate_likelihood {
  std::vector<std::size_t> indices;  // rows of the originating dataset
  dataset points;
  Eigen::VectorXd raw_log_weights;
  std::size_t n_data = 0;

  std::size_t size() const { return static_cast<std::size_t>(points.size()); }
  Eigen::VectorXd weights() const {
    return raw_log_weights.array().exp().matrix();
  }

  // Points drawn uniformly without replacement, every weight N / n_surr.
  // Indices are kept in ascending order.
  static surrogate_likelihood init_rand(const dataset& data,
                                        std::size_t n_surr,
                                        std::uint64_t seed);
  // Explicit points and weights; `indices` may be empty for points that are
  // not rows of a dataset.
  static surrogate_likelihood from_points(dataset points,
                                          const Eigen::VectorXd& weights,
                                          std::size_t n_data,
                                          std::vector<std::size_t> indices = {});
  // Rebuilds the point set from the originating dataset.
  static surrogate_likelihood from_indices(const dataset& data,
                                           std::vector<std::size_t> indices,
                                           Eigen::VectorXd raw_log_weights);
};

// Recorded on the tape; `raw_log_weights` is the differentiable weight
// parameter (or a constant).
ad::var surrogate_loglik(const model_terms& terms,
                         const surrogate_likelihood& s, ad::var z,
                         ad::var raw_log_weights);
ad::var surrogate_score(const model_terms& terms,
                        const surrogate_likelihood& s, ad::var z,
                        ad::var raw_log_weights);

double surrogate_loglik(const surrogate_likelihood& s,
                        const model_density& model, const Eigen::VectorXd& z);

// {indices:[...], raw_log_weights:[...]}
nlohmann::json to_json(const surrogate_likelihood& s);

}  // namespace sldais
