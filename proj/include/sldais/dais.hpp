#pragma once

// Differentiable annealed ELBO estimators built on an uncorrected
// leapfrog + partial momentum refresh chain:
//
//   z0 ~ q0, v0 ~ N(0, M), L = -log q0(z0)
//   for k = 1..K:
//     z^ = z + (eta_k / 2) M^{-1} v
//     g  = grad_z [ beta_k (log prior + loglik_k) + (1 - beta_k) log q0 ] (z^)
//     v^ = v + eta_k g
//     z  = z^ + (eta_k / 2) M^{-1} v^
//     if k < K:  v = gamma v^ + sqrt(1 - gamma^2) sqrt(M) eps_k
//     L += log N(v^ | 0, M) - log N(v_prev | 0, M)
//   return L + log prior(z_K) + (N / B) loglik(D_I, z_K)
//
// The estimators differ only in loglik_k inside the chain (full data,
// a scaled minibatch, or a weighted surrogate) and in the final minibatch.
// Every estimator is a deterministic function of its parameters and an
// explicit noise bundle, so reparameterized gradients come from one reverse
// sweep over the tape.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sldais/anneal.hpp"
#include "sldais/autodiff.hpp"
#include "sldais/model.hpp"
#include "sldais/sampling.hpp"
#include "sldais/surrogate.hpp"
#include "sldais/vardist.hpp"

namespace sldais {

// A chain state became non-finite at `step` (1-based; 0 means before the
// first leapfrog step or in the final likelihood term).
class divergence_error : public std::runtime_error {
 public:
  divergence_error(std::size_t step, const std::string& detail);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct leapfrog_result {
  ad::var z;
  ad::var v_hat;
};

using score_fn = std::function<ad::var(ad::var)>;

// One leapfrog step with a diagonal mass matrix. `grad_logdensity` returns
// the gradient of the (annealed) log-density, i.e. minus the potential
// gradient.
leapfrog_result leapfrog(ad::var z, ad::var v, ad::var eta, ad::var mass,
                         const score_fn& grad_logdensity);

// gamma v^ + sqrt(1 - gamma^2) sqrt(M) eps
ad::var refresh(ad::var v_hat, ad::var gamma, ad::var mass, ad::var eps);

// log N(v_hat | 0, M) - log N(v_prev | 0, M)
ad::var kinetic_diff(ad::var v_hat, ad::var v_prev, ad::var mass);

// log N(v_to | gamma v_from, (1 - gamma^2) M). Throws usage_error unless
// 0 <= gamma < 1.
ad::var refresh_log_density(ad::var v_to, ad::var v_from, ad::var gamma,
                            ad::var mass);

enum class estimator_kind { parametric, dais, ns_dais, sl_dais };

const char* to_string(estimator_kind kind);

// Exogenous randomness for one estimator call.
struct noise_bundle {
  Eigen::VectorXd z_eps;
  std::vector<Eigen::VectorXd> v_eps;  // K + 1 draws; v_eps[0] seeds v0
  std::vector<std::size_t> chain_batch;  // J, shared by every step
  std::vector<std::size_t> final_batch;  // I
  // One independent minibatch per step (the per-evaluation NS variant);
  // empty unless requested.
  std::vector<std::vector<std::size_t>> step_batches;
};

// Draw order is fixed: z_eps, v_eps[0..K], J, I, then per-step batches.
noise_bundle draw_noise(rng_engine& rng, std::size_t dim, std::size_t steps,
                        std::size_t n_data, std::size_t batch_size,
                        bool per_step_batches = false);

// Everything an estimator reads, already bound to one tape.
struct estimator_inputs {
  const dataset* data = nullptr;
  const model_terms* model = nullptr;
  const base_terms* q0 = nullptr;
  const anneal_terms* anneal = nullptr;  // may be null when K == 0
  const surrogate_likelihood* surrogate = nullptr;
  ad::var surrogate_raw_log_weights;
};

struct elbo_estimate {
  ad::var value;
  ad::var z_final;
  std::vector<double> eta;
  std::vector<double> beta;
  std::vector<double> kinetic;

  double scalar() const { return value.scalar(); }
};

elbo_estimate elbo_parametric(const estimator_inputs& in,
                              const noise_bundle& noise);
elbo_estimate elbo_dais(const estimator_inputs& in, const noise_bundle& noise);
elbo_estimate elbo_ns_dais(const estimator_inputs& in,
                           const noise_bundle& noise);
elbo_estimate elbo_sl_dais(const estimator_inputs& in,
                           const noise_bundle& noise);

elbo_estimate estimate(estimator_kind kind, const estimator_inputs& in,
                       const noise_bundle& noise);

}  // namespace sldais
