#include "sldais/dais.hpp"

#include <cmath>

namespace sldais {

namespace {

constexpr double half_log_two_pi = 0.91893853320467274178;

// (N / B) * loglik over `batch`. The scale is omitted when it is exactly one
// so that a full batch records the same operations as the full-data term.
ad::var scaled_batch_loglik(const estimator_inputs& in, ad::var z,
                            const std::vector<std::size_t>& batch) {
  if (batch.empty()) {
    throw ad::usage_error("minibatch must not be empty");
  }
  const double scale =
      static_cast<double>(in.data->size()) / static_cast<double>(batch.size());
  const dataset part = in.data->subset(batch);
  const ad::var ll = in.model->log_lik(part, z);
  return scale == 1.0 ? ll : scale * ll;
}

ad::var scaled_batch_score(const estimator_inputs& in, ad::var z,
                           const dataset& part) {
  const double scale =
      static_cast<double>(in.data->size()) / static_cast<double>(part.size());
  const ad::var g = in.model->lik_score(part, z);
  return scale == 1.0 ? g : scale * g;
}

void require_noise(const estimator_inputs& in, const noise_bundle& noise,
                   std::size_t steps) {
  const auto dim = in.model->model().dim();
  if (static_cast<std::size_t>(noise.z_eps.size()) != dim) {
    throw ad::usage_error("noise bundle z draw has the wrong dimension");
  }
  if (noise.v_eps.size() < steps + 1) {
    throw ad::usage_error("noise bundle needs K + 1 momentum draws, has " +
                          std::to_string(noise.v_eps.size()));
  }
}

std::size_t chain_length(const estimator_inputs& in) {
  return in.anneal ? in.anneal->steps() : 0;
}

// Likelihood score used inside the chain at step k (1-based).
using chain_score = std::function<ad::var(ad::var, std::size_t)>;

elbo_estimate run_chain(const estimator_inputs& in, const noise_bundle& noise,
                        const chain_score& lik_score,
                        const std::vector<std::size_t>& final_batch) {
  const std::size_t steps = chain_length(in);
  require_noise(in, noise, steps);
  ad::tape& t = in.model->tape();
  elbo_estimate out;

  ad::var z;
  ad::var running;
  try {
    z = in.q0->sample(t.constant(noise.z_eps));
    running = -in.q0->log_density(z);
  } catch (const ad::numeric_domain_error& e) {
    throw divergence_error(0, e.what());
  }

  if (steps > 0) {
    const anneal_terms& a = *in.anneal;
    ad::var v = a.sqrt_mass() * t.constant(noise.v_eps[0]);
    for (std::size_t k = 1; k <= steps; ++k) {
      try {
        const ad::var beta = a.beta(k);
        const ad::var eta = a.eta(k);
        const auto annealed = [&](ad::var zz) {
          const ad::var target = in.model->prior_score(zz) + lik_score(zz, k);
          return ad::scale(beta, target) +
                 ad::scale(1.0 - beta, in.q0->score(zz));
        };
        const leapfrog_result step = leapfrog(z, v, eta, a.mass(), annealed);
        const ad::var dk = kinetic_diff(step.v_hat, v, a.mass());
        running = running + dk;
        z = step.z;
        if (k < steps) {
          v = refresh(step.v_hat, a.gamma(), a.mass(),
                      t.constant(noise.v_eps[k]));
        } else {
          v = step.v_hat;
        }
        out.eta.push_back(eta.scalar());
        out.beta.push_back(beta.scalar());
        out.kinetic.push_back(dk.scalar());
      } catch (const ad::numeric_domain_error& e) {
        throw divergence_error(k, e.what());
      }
    }
  }

  try {
    out.value = running + in.model->log_prior(z) +
                scaled_batch_loglik(in, z, final_batch);
  } catch (const ad::numeric_domain_error& e) {
    throw divergence_error(0, e.what());
  }
  out.z_final = z;
  return out;
}

}  // namespace

divergence_error::divergence_error(std::size_t step, const std::string& detail)
    : std::runtime_error("chain diverged at step " + std::to_string(step) +
                         ": " + detail),
      step_(step) {}

leapfrog_result leapfrog(ad::var z, ad::var v, ad::var eta, ad::var mass,
                         const score_fn& grad_logdensity) {
  if (eta.scalar() < 0.0) throw ad::usage_error("leapfrog: eta must be >= 0");
  const ad::var half = 0.5 * eta;
  const ad::var z_half = z + ad::scale(half, v / mass);
  const ad::var g = grad_logdensity(z_half);
  const ad::var v_hat = v + ad::scale(eta, g);
  const ad::var z_new = z_half + ad::scale(half, v_hat / mass);
  return {z_new, v_hat};
}

ad::var refresh(ad::var v_hat, ad::var gamma, ad::var mass, ad::var eps) {
  const double g = gamma.scalar();
  if (!(g >= 0.0 && g < 1.0)) {
    throw ad::usage_error("refresh: gamma must lie in [0, 1)");
  }
  const ad::var keep = ad::sqrt(1.0 - ad::square(gamma));
  return ad::scale(gamma, v_hat) + ad::scale(keep, ad::sqrt(mass) * eps);
}

ad::var kinetic_diff(ad::var v_hat, ad::var v_prev, ad::var mass) {
  if (v_hat.size() != v_prev.size() || v_hat.size() != mass.size()) {
    throw ad::usage_error("kinetic_diff: dimension mismatch");
  }
  const ad::var now = ad::sum(ad::square(v_hat) / mass);
  const ad::var before = ad::sum(ad::square(v_prev) / mass);
  return -0.5 * (now - before);
}

ad::var refresh_log_density(ad::var v_to, ad::var v_from, ad::var gamma,
                            ad::var mass) {
  const double g = gamma.scalar();
  if (!(g >= 0.0 && g < 1.0)) {
    throw ad::usage_error("refresh_log_density: gamma must lie in [0, 1)");
  }
  const ad::var var = ad::scale(1.0 - ad::square(gamma), mass);
  const ad::var r = v_to - ad::scale(gamma, v_from);
  const double norm = static_cast<double>(v_to.size()) * half_log_two_pi;
  return -0.5 * ad::sum(ad::square(r) / var) - 0.5 * ad::sum(ad::log(var)) -
         norm;
}

const char* to_string(estimator_kind kind) {
  switch (kind) {
    case estimator_kind::parametric: return "parametric";
    case estimator_kind::dais: return "dais";
    case estimator_kind::ns_dais: return "ns-dais";
    case estimator_kind::sl_dais: return "sl-dais";
  }
  return "unknown";
}

noise_bundle draw_noise(rng_engine& rng, std::size_t dim, std::size_t steps,
                        std::size_t n_data, std::size_t batch_size,
                        bool per_step_batches) {
  noise_bundle n;
  n.z_eps = standard_normal(dim, rng);
  n.v_eps.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    n.v_eps.push_back(standard_normal(dim, rng));
  }
  n.chain_batch = sample_minibatch(n_data, batch_size, rng);
  n.final_batch = sample_minibatch(n_data, batch_size, rng);
  if (per_step_batches) {
    for (std::size_t k = 0; k < steps; ++k) {
      n.step_batches.push_back(sample_minibatch(n_data, batch_size, rng));
    }
  }
  return n;
}

elbo_estimate elbo_parametric(const estimator_inputs& in,
                              const noise_bundle& noise) {
  require_noise(in, noise, 0);
  ad::tape& t = in.model->tape();
  elbo_estimate out;
  try {
    const ad::var z = in.q0->sample(t.constant(noise.z_eps));
    const ad::var running = -in.q0->log_density(z);
    out.value = running + in.model->log_prior(z) +
                scaled_batch_loglik(in, z, noise.final_batch);
    out.z_final = z;
  } catch (const ad::numeric_domain_error& e) {
    throw divergence_error(0, e.what());
  }
  return out;
}

elbo_estimate elbo_dais(const estimator_inputs& in, const noise_bundle& noise) {
  const dataset& data = *in.data;
  return run_chain(
      in, noise,
      [&](ad::var z, std::size_t) { return in.model->lik_score(data, z); },
      all_indices(data.size()));
}

elbo_estimate elbo_ns_dais(const estimator_inputs& in,
                           const noise_bundle& noise) {
  const std::size_t steps = chain_length(in);
  const bool per_step = !noise.step_batches.empty();
  if (per_step && noise.step_batches.size() < steps) {
    throw ad::usage_error("noise bundle needs one minibatch per step");
  }
  if (noise.chain_batch.empty()) {
    throw ad::usage_error("chain minibatch must not be empty");
  }
  std::vector<dataset> parts;
  if (per_step) {
    for (std::size_t k = 0; k < steps; ++k) {
      parts.push_back(in.data->subset(noise.step_batches[k]));
    }
  } else {
    parts.push_back(in.data->subset(noise.chain_batch));
  }
  return run_chain(
      in, noise,
      [&](ad::var z, std::size_t k) {
        const dataset& part = per_step ? parts[k - 1] : parts.front();
        return scaled_batch_score(in, z, part);
      },
      noise.final_batch);
}

elbo_estimate elbo_sl_dais(const estimator_inputs& in,
                           const noise_bundle& noise) {
  if (in.surrogate == nullptr || !in.surrogate_raw_log_weights.valid()) {
    throw ad::usage_error("sl-dais needs a surrogate likelihood");
  }
  return run_chain(
      in, noise,
      [&](ad::var z, std::size_t) {
        return surrogate_score(*in.model, *in.surrogate, z,
                               in.surrogate_raw_log_weights);
      },
      noise.final_batch);
}

elbo_estimate estimate(estimator_kind kind, const estimator_inputs& in,
                       const noise_bundle& noise) {
  switch (kind) {
    case estimator_kind::parametric: return elbo_parametric(in, noise);
    case estimator_kind::dais: return elbo_dais(in, noise);
    case estimator_kind::ns_dais: return elbo_ns_dais(in, noise);
    case estimator_kind::sl_dais: return elbo_sl_dais(in, noise);
  }
  throw ad::usage_error("unknown estimator kind");
}

}  // namespace sldais
