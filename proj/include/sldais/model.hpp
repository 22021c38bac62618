#pragma once

// Factored-likelihood models with a single global latent vector z:
//   log p(D, z) = log_prior(z) + sum_n log p(y_n | z, x_n).
// Two likelihoods are provided: Gaussian linear regression and Bernoulli
// logistic regression. Both share a Gaussian prior N(mean, precision^{-1}).

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sldais/autodiff.hpp"

namespace sldais {

class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct dataset {
  std::shared_ptr<const Eigen::MatrixXd> x;  // N x d
  Eigen::VectorXd y;
  std::vector<std::string> covariate_names;

  // Validates shapes and finiteness.
  static dataset make(Eigen::MatrixXd x, Eigen::VectorXd y,
                      std::vector<std::string> names = {});

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(x->cols()); }

  // Rows at `indices`, in the given order. Indices must be in range and
  // distinct. The full identity index set returns a dataset sharing storage.
  dataset subset(std::span<const std::size_t> indices) const;
};

enum class likelihood_kind { linear, logistic };

const char* to_string(likelihood_kind kind);
likelihood_kind likelihood_kind_from_string(const std::string& name);

struct model_density {
  likelihood_kind kind = likelihood_kind::linear;
  Eigen::VectorXd prior_mean;
  std::shared_ptr<const Eigen::MatrixXd> prior_precision;
  // Initial / fixed observation scale. Only meaningful for linear models.
  double sigma_obs = 1.0;

  static model_density linear(Eigen::VectorXd mean, Eigen::MatrixXd precision,
                              double sigma_obs);
  static model_density logistic(Eigen::VectorXd mean,
                                Eigen::MatrixXd precision);

  std::size_t dim() const { return static_cast<std::size_t>(prior_mean.size()); }
  double prior_log_det() const { return prior_log_det_; }

  // Throws data_error when the dataset is incompatible with the model.
  void check_compatible(const dataset& data) const;

 private:
  void finalize();
  double prior_log_det_ = 0.0;
};

// Model log-density terms recorded on a tape. `log_sigma_obs` is the
// (possibly learnable) log observation scale; ignored for logistic models.
class model_terms {
 public:
  model_terms(ad::tape& tape, const model_density& model,
              ad::var log_sigma_obs);
  // Uses the model's fixed sigma_obs as a constant.
  model_terms(ad::tape& tape, const model_density& model);

  const model_density& model() const { return *model_; }
  ad::tape& tape() const { return *tape_; }
  ad::var log_sigma_obs() const { return log_sigma_; }

  ad::var log_prior(ad::var z) const;
  // Gradient of log_prior with respect to z.
  ad::var prior_score(ad::var z) const;

  // sum_n w_n log p(y_n | z, x_n) over all rows of `data`; unit weights when
  // `weights` is not valid().
  ad::var log_lik(const dataset& data, ad::var z,
                  ad::var weights = ad::var()) const;
  // Gradient of log_lik with respect to z.
  ad::var lik_score(const dataset& data, ad::var z,
                    ad::var weights = ad::var()) const;

 private:
  ad::tape* tape_;
  const model_density* model_;
  ad::var log_sigma_;
};

// Sum of per-datum log-likelihoods over `indices` (empty set gives 0).
ad::var log_lik_subset(const model_terms& terms, const dataset& data,
                       ad::var z, std::span<const std::size_t> indices);

// Plain-value conveniences.
double log_prior(const model_density& model, const Eigen::VectorXd& z);
double log_lik_subset(const model_density& model, const dataset& data,
                      const Eigen::VectorXd& z,
                      std::span<const std::size_t> indices);
std::vector<std::size_t> all_indices(std::size_t n);

}  // namespace sldais
