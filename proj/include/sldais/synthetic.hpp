#pragma once

// Synthetic regression data. Covariates are i.i.d. standard normal and the
// true coefficients are drawn from the prior.
//   linear:    y = X z* + sigma_obs * eps
//   logistic:  y = 1[x . z* + label_noise * eps > 0]

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>
#include <json.hpp>

#include "sldais/model.hpp"

namespace sldais {

struct synthetic_spec {
  likelihood_kind kind = likelihood_kind::linear;
  std::size_t n = 32;
  std::size_t dim = 2;
  std::uint64_t seed = 0;
  double sigma_obs = 1.0;
  double label_noise = 1.0;
  Eigen::VectorXd prior_mean;       // defaults to zero
  Eigen::MatrixXd prior_precision;  // defaults to identity
};

struct synthetic_data {
  dataset data;
  Eigen::VectorXd z_true;
};

synthetic_data generate(const synthetic_spec& spec);

// Fields: model, N, D, seed, sigma_obs, label_noise, prior {mean, precision}.
synthetic_spec synthetic_spec_from_json(const nlohmann::json& j);

}  // namespace sldais
