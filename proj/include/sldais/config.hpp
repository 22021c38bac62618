#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "sldais/optim.hpp"
#include "sldais/model.hpp"
#include "sldais/vardist.hpp"

namespace sldais {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class method { mf, mvn, dais, ns_dais, sl_dais };

const char* to_string(method m);
method method_from_string(const std::string& name);
bool is_annealed(method m);

struct prior_spec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
};

// `mean` and `precision` may be scalars (broadcast), vectors (precision as a
// diagonal) or, for precision, a full matrix.
prior_spec prior_from_json(const nlohmann::json& j, std::size_t dim);

enum class q0_init { standard, prior };

struct run_config {
  method method_ = method::sl_dais;
  std::size_t k = 8;
  std::optional<std::size_t> b;
  std::optional<std::size_t> n_surr;
  std::uint64_t seed = 0;
  std::size_t steps = 1000;
  lr_schedule lr;
  std::string data_path;
  nlohmann::json prior = {{"mean", 0.0}, {"precision", 1.0}};
  likelihood_kind model = likelihood_kind::logistic;
  double sigma_obs = 1.0;

  // flags
  bool learn_mass = true;
  bool ns_prime = false;
  bool standardize = false;
  bool learn_model = false;

  // options
  std::optional<base_kind> base;
  double eta_init = 1e-3;
  double eta_max = 0.25;
  std::size_t samples_per_step = 1;
  std::size_t eval_samples = 10000;
  std::size_t metrics_every = 1;
  bool learn_q0 = true;
  bool learn_beta = true;
  bool learn_step_size = true;
  bool learn_kappa = true;  // only with learn_step_size
  bool learn_gamma = true;
  bool learn_surrogate = true;
  std::optional<double> fixed_gamma;
  q0_init init = q0_init::standard;
  std::string init_checkpoint;
  bool emit_wall_time = true;

  base_kind base_distribution_kind() const;
  // Minibatch size used by the estimator (N for full-data methods).
  std::size_t effective_batch(std::size_t n_data) const;
  // Chain length used by the estimator (0 for mf / mvn).
  std::size_t effective_steps() const;

  // Throws config_error on missing or inconsistent fields.
  void validate() const;
  void validate_against(std::size_t n_data) const;
};

run_config config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const run_config& c);

}  // namespace sldais
