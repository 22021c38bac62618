#pragma once

// Closed-form analytics for conjugate Bayesian linear regression with prior
// N(mean0, precision0^{-1}) and likelihood prod_n N(y_n | z . x_n, sigma^2).

#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sldais/model.hpp"

namespace sldais::oracle {

class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct gaussian_moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;

  Eigen::MatrixXd covariance() const;
  double log_density(const Eigen::VectorXd& z) const;
};

// Gradient of the full log likelihood is a - B z.
struct likelihood_quadratic {
  Eigen::VectorXd a;
  Eigen::MatrixXd b;
};

gaussian_moments prior_of(const model_density& model);

// Accepts a dataset pointer so that the no-data case can be expressed with
// nullptr.
gaussian_moments exact_posterior(const gaussian_moments& prior,
                                 const dataset* data, double sigma_obs);
double log_evidence(const gaussian_moments& prior, const dataset* data,
                    double sigma_obs);
// Direct N-dimensional marginal N(y | X mean0, sigma^2 I + X P0^{-1} X^T);
// cost O(N^3), for cross-checks only.
double log_evidence_direct(const gaussian_moments& prior, const dataset& data,
                           double sigma_obs);

struct mixture_moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::vector<gaussian_moments> components;
};

inline constexpr std::size_t max_enumerated_subsets = 100000;

// Uniform mixture over all size-B subsets J of per-subset posteriors with the
// likelihood raised to N/B.
mixture_moments aggregate_pseudo_posterior(const gaussian_moments& prior,
                                           const dataset& data,
                                           double sigma_obs,
                                           std::size_t batch_size);

// Precision + dB, mean solved against precision * mean + da.
gaussian_moments surrogate_posterior(const gaussian_moments& posterior,
                                     const Eigen::VectorXd& delta_a,
                                     const Eigen::MatrixXd& delta_b);

// |trace(precision^{-1} dB)|
double surrogate_trace_term(const gaussian_moments& posterior,
                        const Eigen::MatrixXd& delta_b);

likelihood_quadratic likelihood_quadratic_of(const dataset& data,
                                             double sigma_obs);
// Same quantity for a weighted point set (weights multiply each row's term).
likelihood_quadratic likelihood_quadratic_of(const dataset& data,
                                             const Eigen::VectorXd& weights,
                                             double sigma_obs);

// C(n, k) with saturation at max_enumerated_subsets + 1.
std::size_t capped_binomial(std::size_t n, std::size_t k);

}  // namespace sldais::oracle
