#include "sldais/oracle.hpp"

#include <cmath>
#include <numbers>

namespace sldais::oracle {

namespace {

constexpr double log_two_pi = 1.83787706640934548356;

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& m,
                                   const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw numeric_error(std::string(what) + " is not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

gaussian_moments condition(const gaussian_moments& prior,
                           const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           double inv_var) {
  gaussian_moments post;
  post.precision = prior.precision + inv_var * x.transpose() * x;
  const Eigen::VectorXd rhs =
      prior.precision * prior.mean + inv_var * x.transpose() * y;
  post.mean = factor(post.precision, "posterior precision").solve(rhs);
  return post;
}

}  // namespace

Eigen::MatrixXd gaussian_moments::covariance() const {
  return factor(precision, "precision")
      .solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
}

double gaussian_moments::log_density(const Eigen::VectorXd& z) const {
  const auto llt = factor(precision, "precision");
  const Eigen::VectorXd r = z - mean;
  return -0.5 * static_cast<double>(mean.size()) * log_two_pi +
         0.5 * log_det(llt) - 0.5 * r.dot(precision * r);
}

gaussian_moments prior_of(const model_density& model) {
  return {model.prior_mean, *model.prior_precision};
}

gaussian_moments exact_posterior(const gaussian_moments& prior,
                                 const dataset* data, double sigma_obs) {
  if (!(sigma_obs > 0.0)) throw numeric_error("sigma_obs must be positive");
  if (data == nullptr || data->size() == 0) return prior;
  return condition(prior, *data->x, data->y, 1.0 / (sigma_obs * sigma_obs));
}

double log_evidence(const gaussian_moments& prior, const dataset* data,
                    double sigma_obs) {
  if (!(sigma_obs > 0.0)) throw numeric_error("sigma_obs must be positive");
  if (data == nullptr || data->size() == 0) return 0.0;
  // Bayes identity at the posterior mean:
  //   log p(D) = log p(z) + log p(D | z) - log p(z | D).
  const gaussian_moments post = exact_posterior(prior, data, sigma_obs);
  const Eigen::VectorXd& z = post.mean;
  const Eigen::VectorXd r = data->y - *data->x * z;
  const double n = static_cast<double>(data->size());
  const double loglik = -0.5 * n * log_two_pi - n * std::log(sigma_obs) -
                        0.5 * r.squaredNorm() / (sigma_obs * sigma_obs);
  return prior.log_density(z) + loglik - post.log_density(z);
}

double log_evidence_direct(const gaussian_moments& prior, const dataset& data,
                           double sigma_obs) {
  const Eigen::MatrixXd& x = *data.x;
  const auto n = x.rows();
  const Eigen::MatrixXd cov =
      sigma_obs * sigma_obs * Eigen::MatrixXd::Identity(n, n) +
      x * prior.covariance() * x.transpose();
  const auto llt = factor(cov, "marginal covariance");
  const Eigen::VectorXd r = data.y - x * prior.mean;
  return -0.5 * static_cast<double>(n) * log_two_pi - 0.5 * log_det(llt) -
         0.5 * r.dot(llt.solve(r));
}

std::size_t capped_binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > static_cast<double>(max_enumerated_subsets)) {
      return max_enumerated_subsets + 1;
    }
  }
  return static_cast<std::size_t>(std::llround(c));
}

mixture_moments aggregate_pseudo_posterior(const gaussian_moments& prior,
                                           const dataset& data,
                                           double sigma_obs,
                                           std::size_t batch_size) {
  const std::size_t n = data.size();
  if (batch_size < 1 || batch_size > n) {
    throw ad::usage_error("batch size must lie in [1, N]");
  }
  if (capped_binomial(n, batch_size) > max_enumerated_subsets) {
    throw ad::usage_error("C(N, B) exceeds the enumeration limit of " +
                          std::to_string(max_enumerated_subsets));
  }
  const double inv_var = static_cast<double>(n) /
                         static_cast<double>(batch_size) /
                         (sigma_obs * sigma_obs);
  mixture_moments out;
  const auto d = prior.mean.size();
  Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second_acc = Eigen::MatrixXd::Zero(d, d);

  // Lexicographic enumeration of combinations.
  std::vector<std::size_t> idx(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) idx[i] = i;
  while (true) {
    const dataset part = data.subset(idx);
    gaussian_moments c = condition(prior, *part.x, part.y, inv_var);
    mean_acc += c.mean;
    second_acc += c.covariance() + c.mean * c.mean.transpose();
    out.components.push_back(std::move(c));

    std::size_t i = batch_size;
    while (i > 0 && idx[i - 1] == n - batch_size + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < batch_size; ++j) idx[j] = idx[j - 1] + 1;
  }
  const double m = static_cast<double>(out.components.size());
  out.mean = mean_acc / m;
  out.covariance = second_acc / m - out.mean * out.mean.transpose();
  return out;
}

gaussian_moments surrogate_posterior(const gaussian_moments& posterior,
                                     const Eigen::VectorXd& delta_a,
                                     const Eigen::MatrixXd& delta_b) {
  gaussian_moments s;
  s.precision = posterior.precision + delta_b;
  const auto llt = factor(s.precision, "surrogate posterior precision");
  s.mean = llt.solve(posterior.precision * posterior.mean + delta_a);
  return s;
}

double surrogate_trace_term(const gaussian_moments& posterior,
                        const Eigen::MatrixXd& delta_b) {
  const auto llt = factor(posterior.precision, "posterior precision");
  return std::abs(llt.solve(delta_b).trace());
}

likelihood_quadratic likelihood_quadratic_of(const dataset& data,
                                             double sigma_obs) {
  return likelihood_quadratic_of(
      data, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(data.size())),
      sigma_obs);
}

likelihood_quadratic likelihood_quadratic_of(const dataset& data,
                                             const Eigen::VectorXd& weights,
                                             double sigma_obs) {
  if (!(sigma_obs > 0.0)) throw numeric_error("sigma_obs must be positive");
  const double inv_var = 1.0 / (sigma_obs * sigma_obs);
  const Eigen::MatrixXd& x = *data.x;
  likelihood_quadratic q;
  q.a = inv_var * x.transpose() * weights.cwiseProduct(data.y);
  q.b = inv_var * x.transpose() * weights.asDiagonal() * x;
  return q;
}

}  // namespace sldais::oracle
