#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sldais/anneal.hpp"
#include "sldais/config.hpp"
#include "sldais/dais.hpp"
#include "sldais/io.hpp"
#include "sldais/model.hpp"
#include "sldais/optim.hpp"
#include "sldais/surrogate.hpp"
#include "sldais/vardist.hpp"

namespace sldais {

class training_aborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct problem {
  dataset data;
  model_density model;
};

// Reads the CSV named by the config (optionally z-scored) and builds the
// model from the prior spec.
problem make_problem(const run_config& config);
problem make_problem(const run_config& config, dataset data);

// Every trainable quantity. Flattened in the fixed order
//   [q0 params, anneal raws, surrogate raw_log_weights, log sigma_obs]
// where the last block is present only for linear models.
struct variational_state {
  base_distribution q0;
  std::optional<annealing_state> anneal;
  std::optional<surrogate_likelihood> surrogate;
  std::optional<double> log_sigma_obs;

  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
};

variational_state initial_state(const run_config& config, const problem& p);

// Entries of the flattened vector that the optimizer may change.
Eigen::Array<bool, Eigen::Dynamic, 1> trainable_mask(
    const run_config& config, const variational_state& state);

estimator_kind estimator_for(method m);

// Noise for one sample. Draw order matches draw_noise, with the minibatch
// size of the configured method.
noise_bundle draw_sample_noise(const run_config& config, const problem& p,
                               rng_engine& rng);

struct evaluation {
  double value = 0.0;  // mean over the supplied noise bundles
  Eigen::VectorXd gradient;  // empty unless requested
  std::vector<Eigen::VectorXd> z_final;
};

// Averaged estimator over `noise`; throws divergence_error.
evaluation evaluate(const run_config& config, const problem& p,
                    const variational_state& state,
                    std::span<const noise_bundle> noise, bool with_gradient);

struct final_report {
  std::string method_name;
  std::size_t steps = 0;
  std::size_t divergences = 0;
  double elbo_mean = 0.0;
  double elbo_se = 0.0;
  std::size_t eval_samples = 0;
  std::size_t eval_divergences = 0;
  std::optional<double> log_evidence;
  std::optional<double> gap;
  double wall_ms = 0.0;
};

nlohmann::json to_json(const final_report& r);

struct fit_result {
  variational_state state;
  adam_state adam;
  final_report report;
};

struct fit_options {
  std::ostream* metrics = nullptr;  // JSONL sink; may be null
  // Override for the number of evaluation samples (config value otherwise).
  std::optional<std::size_t> eval_samples;
  // Called after every optimizer step with the 0-based step index.
  std::function<void(std::size_t, const variational_state&)> on_step;
};

fit_result run_fit(const run_config& config, const problem& p,
                   const fit_options& options = {});
fit_result run_fit(const run_config& config, const problem& p,
                   variational_state init, const fit_options& options = {});

// Mean and standard error of the estimator at `state` over `samples` draws
// from an evaluation stream seeded by `seed`. The final likelihood term uses
// the full dataset.
final_report evaluate_elbo(const run_config& config, const problem& p,
                           const variational_state& state, std::size_t samples,
                           std::uint64_t seed);

// Seed of the post-training evaluation stream.
std::uint64_t evaluation_seed(std::uint64_t seed);

nlohmann::json checkpoint_json(const run_config& config,
                               const variational_state& state,
                               const adam_state* adam = nullptr);
struct checkpoint {
  run_config config;
  variational_state state;
  std::optional<adam_state> adam;
};
// `data` is needed to rebuild surrogate points from their indices.
checkpoint load_checkpoint(const nlohmann::json& j, const dataset& data);

nlohmann::json annealing_to_json(const annealing_state& a);
annealing_state annealing_from_json(const nlohmann::json& j);

}  // namespace sldais
