#include "sldais/anneal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sldais {

namespace {

std::vector<Eigen::Index> range(Eigen::Index begin, Eigen::Index end) {
  std::vector<Eigen::Index> r;
  for (Eigen::Index i = begin; i < end; ++i) r.push_back(i);
  return r;
}

}  // namespace

double gamma_from_raw(double raw_gamma) {
  return gamma_ceiling / (1.0 + std::exp(-raw_gamma));
}

double raw_gamma_for(double gamma) {
  if (!(gamma > 0.0 && gamma < gamma_ceiling)) {
    throw std::invalid_argument("gamma must lie in (0, 0.999) to be learnable");
  }
  const double p = gamma / gamma_ceiling;
  return std::log(p / (1.0 - p));
}

annealing_state annealing_state::initial(std::size_t steps, std::size_t dim,
                                         double eta_tilde) {
  annealing_state s;
  s.steps = steps;
  s.raw_beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(steps));
  s.eta_tilde = eta_tilde;
  s.kappa = 0.0;
  s.raw_gamma = raw_gamma_for(0.9);
  s.raw_mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  return s;
}

std::size_t annealing_state::parameter_count() const {
  return steps + 3 + dim();
}

Eigen::VectorXd annealing_state::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  flat << raw_beta, eta_tilde, kappa, raw_gamma, raw_mass;
  return flat;
}

void annealing_state::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw std::invalid_argument("annealing parameter size mismatch");
  }
  const auto k = static_cast<Eigen::Index>(steps);
  raw_beta = flat.head(k);
  eta_tilde = flat[k];
  kappa = flat[k + 1];
  raw_gamma = flat[k + 2];
  raw_mass = flat.tail(static_cast<Eigen::Index>(dim()));
}

Eigen::VectorXd betas(const annealing_state& state) {
  if (state.steps < 1) {
    throw ad::usage_error("betas() needs at least one annealing step");
  }
  ad::tape t;
  anneal_terms terms(t, state);
  return terms.betas().value();
}

double step_size(const annealing_state& state, double beta_k) {
  return std::clamp(state.eta_tilde + state.kappa * beta_k, 0.0,
                    state.eta_max);
}

Eigen::VectorXd mass_diag(const annealing_state& state) {
  return state.raw_mass.array().exp().matrix();
}

double gamma_of(const annealing_state& state) {
  return state.fixed_gamma ? *state.fixed_gamma
                           : gamma_from_raw(state.raw_gamma);
}

anneal_terms::anneal_terms(ad::tape& tape, const annealing_state& layout,
                           ad::var params)
    : steps_(layout.steps) {
  if (static_cast<std::size_t>(params.size()) != layout.parameter_count()) {
    throw ad::usage_error("annealing parameter vector has wrong size");
  }
  const auto k = static_cast<Eigen::Index>(layout.steps);
  const auto d = static_cast<Eigen::Index>(layout.dim());
  if (k > 0) {
    const ad::var w = ad::exp(ad::gather(params, range(0, k)));
    betas_ = ad::cumsum(w) / ad::sum(w);
    const ad::var eta_tilde = ad::element(params, k);
    const ad::var kappa = ad::element(params, k + 1);
    for (Eigen::Index i = 0; i < k; ++i) {
      beta_.push_back(ad::element(betas_, i));
      eta_.push_back(
          ad::clip(eta_tilde + kappa * beta_.back(), 0.0, layout.eta_max));
    }
  }
  if (layout.fixed_gamma) {
    gamma_ = tape.constant(*layout.fixed_gamma);
  } else {
    gamma_ = gamma_ceiling * ad::sigmoid(ad::element(params, k + 2));
  }
  const ad::var raw_mass = ad::gather(params, range(k + 3, k + 3 + d));
  mass_ = ad::exp(raw_mass);
  inv_mass_ = ad::exp(-raw_mass);
  sqrt_mass_ = ad::exp(0.5 * raw_mass);
}

anneal_terms::anneal_terms(ad::tape& tape, const annealing_state& state)
    : anneal_terms(tape, state, tape.constant(state.flatten())) {}

}  // namespace sldais
