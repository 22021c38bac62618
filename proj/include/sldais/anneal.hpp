#pragma once

// Learnable annealing schedule and integrator hyperparameters, each a
// transform of an unconstrained raw parameter:
//   beta    = cumsum(exp(raw_beta)) / sum(exp(raw_beta))   (beta_K == 1)
//   eta_k   = clip(eta_tilde + kappa * beta_k, 0, eta_max)
//   gamma   = 0.999 * sigmoid(raw_gamma)                   (in [0, 1))
//   M       = exp(raw_mass)                                (diagonal)

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sldais/autodiff.hpp"

namespace sldais {

inline constexpr double gamma_ceiling = 0.999;
inline constexpr double default_eta_max = 0.25;

struct annealing_state {
  std::size_t steps = 0;       // K
  Eigen::VectorXd raw_beta;    // length K
  double eta_tilde = 1e-3;
  double kappa = 0.0;
  double eta_max = default_eta_max;
  double raw_gamma = 0.0;
  Eigen::VectorXd raw_mass;    // length D, log of the mass diagonal
  // When set, gamma is this constant and raw_gamma is ignored.
  std::optional<double> fixed_gamma;

  // Equal raw_beta, gamma = 0.9, kappa = 0, M = I.
  static annealing_state initial(std::size_t steps, std::size_t dim,
                                 double eta_tilde = 1e-3);

  std::size_t dim() const { return static_cast<std::size_t>(raw_mass.size()); }

  // Flattened as [raw_beta, eta_tilde, kappa, raw_gamma, raw_mass].
  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
};

Eigen::VectorXd betas(const annealing_state& state);
double step_size(const annealing_state& state, double beta_k);
Eigen::VectorXd mass_diag(const annealing_state& state);
double gamma_of(const annealing_state& state);

double gamma_from_raw(double raw_gamma);
double raw_gamma_for(double gamma);

// Schedule quantities recorded on a tape from a flattened parameter variable.
class anneal_terms {
 public:
  anneal_terms(ad::tape& tape, const annealing_state& layout, ad::var params);
  // Parameters enter as constants.
  anneal_terms(ad::tape& tape, const annealing_state& state);

  std::size_t steps() const { return steps_; }
  // 1-based step index k in [1, K].
  ad::var beta(std::size_t k) const { return beta_[k - 1]; }
  ad::var eta(std::size_t k) const { return eta_[k - 1]; }
  ad::var gamma() const { return gamma_; }
  ad::var mass() const { return mass_; }
  ad::var inv_mass() const { return inv_mass_; }
  ad::var sqrt_mass() const { return sqrt_mass_; }
  ad::var betas() const { return betas_; }

 private:
  std::size_t steps_;
  ad::var betas_;
  std::vector<ad::var> beta_;
  std::vector<ad::var> eta_;
  ad::var gamma_;
  ad::var mass_;
  ad::var inv_mass_;
  ad::var sqrt_mass_;
};

}  // namespace sldais
