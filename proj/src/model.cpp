#include "sldais/model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace sldais {

namespace {

constexpr double half_log_two_pi = 0.91893853320467274178;

}  // namespace

dataset dataset::make(Eigen::MatrixXd x, Eigen::VectorXd y,
                      std::vector<std::string> names) {
  if (x.rows() < 1 || x.cols() < 1) {
    throw data_error("dataset needs at least one row and one covariate");
  }
  if (x.rows() != y.size()) {
    throw data_error("dataset has " + std::to_string(x.rows()) +
                     " covariate rows but " + std::to_string(y.size()) +
                     " responses");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw data_error("dataset contains non-finite entries");
  }
  if (names.empty()) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      names.push_back("x" + std::to_string(j + 1));
    }
  } else if (static_cast<Eigen::Index>(names.size()) != x.cols()) {
    throw data_error("covariate name count does not match columns");
  }
  dataset d;
  d.x = std::make_shared<const Eigen::MatrixXd>(std::move(x));
  d.y = std::move(y);
  d.covariate_names = std::move(names);
  return d;
}

dataset dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t n = size();
  std::vector<char> seen(n, 0);
  bool identity = indices.size() == n;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= n) {
      throw ad::usage_error("index " + std::to_string(i) +
                            " out of range for dataset of size " +
                            std::to_string(n));
    }
    if (seen[i]) {
      throw ad::usage_error("duplicate index " + std::to_string(i));
    }
    seen[i] = 1;
    identity = identity && i == k;
  }
  if (identity) return *this;

  Eigen::MatrixXd xs(static_cast<Eigen::Index>(indices.size()), x->cols());
  Eigen::VectorXd ys(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(indices[k]);
    xs.row(static_cast<Eigen::Index>(k)) = x->row(row);
    ys[static_cast<Eigen::Index>(k)] = y[row];
  }
  dataset d;
  d.x = std::make_shared<const Eigen::MatrixXd>(std::move(xs));
  d.y = std::move(ys);
  d.covariate_names = covariate_names;
  return d;
}

const char* to_string(likelihood_kind kind) {
  return kind == likelihood_kind::linear ? "linear" : "logistic";
}

likelihood_kind likelihood_kind_from_string(const std::string& name) {
  if (name == "linear") return likelihood_kind::linear;
  if (name == "logistic") return likelihood_kind::logistic;
  throw data_error("unknown model kind '" + name +
                   "' (expected linear or logistic)");
}

model_density model_density::linear(Eigen::VectorXd mean,
                                    Eigen::MatrixXd precision,
                                    double sigma_obs) {
  if (!(sigma_obs > 0.0) || !std::isfinite(sigma_obs)) {
    throw data_error("sigma_obs must be positive and finite");
  }
  model_density m;
  m.kind = likelihood_kind::linear;
  m.prior_mean = std::move(mean);
  m.prior_precision =
      std::make_shared<const Eigen::MatrixXd>(std::move(precision));
  m.sigma_obs = sigma_obs;
  m.finalize();
  return m;
}

model_density model_density::logistic(Eigen::VectorXd mean,
                                      Eigen::MatrixXd precision) {
  model_density m;
  m.kind = likelihood_kind::logistic;
  m.prior_mean = std::move(mean);
  m.prior_precision =
      std::make_shared<const Eigen::MatrixXd>(std::move(precision));
  m.finalize();
  return m;
}

void model_density::finalize() {
  const auto& p = *prior_precision;
  if (prior_mean.size() < 1 || p.rows() != prior_mean.size() ||
      p.cols() != prior_mean.size()) {
    throw data_error("prior precision must be D x D with D = mean length");
  }
  if (!(p - p.transpose()).isZero(1e-12 * (1.0 + p.cwiseAbs().maxCoeff()))) {
    throw data_error("prior precision must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  if (llt.info() != Eigen::Success) {
    throw data_error("prior precision must be positive definite");
  }
  prior_log_det_ =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

void model_density::check_compatible(const dataset& data) const {
  if (data.dim() != dim()) {
    throw data_error("dataset has " + std::to_string(data.dim()) +
                     " covariates but the latent dimension is " +
                     std::to_string(dim()));
  }
  if (kind == likelihood_kind::logistic) {
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
      if (data.y[i] != 0.0 && data.y[i] != 1.0) {
        throw data_error("logistic responses must be 0 or 1 (row " +
                         std::to_string(i + 1) + ")");
      }
    }
  }
}

model_terms::model_terms(ad::tape& tape, const model_density& model,
                         ad::var log_sigma_obs)
    : tape_(&tape), model_(&model), log_sigma_(log_sigma_obs) {}

model_terms::model_terms(ad::tape& tape, const model_density& model)
    : tape_(&tape),
      model_(&model),
      log_sigma_(tape.constant(std::log(model.sigma_obs))) {}

ad::var model_terms::log_prior(ad::var z) const {
  if (static_cast<std::size_t>(z.size()) != model_->dim()) {
    throw ad::usage_error("log_prior: z has size " + std::to_string(z.size()) +
                          ", model dimension is " +
                          std::to_string(model_->dim()));
  }
  const ad::var r = z - tape_->constant(model_->prior_mean);
  const ad::var quad = ad::dot(r, ad::matvec(model_->prior_precision, r));
  const double norm = 0.5 * model_->prior_log_det() -
                      static_cast<double>(model_->dim()) * half_log_two_pi;
  return -0.5 * quad + norm;
}

ad::var model_terms::prior_score(ad::var z) const {
  const ad::var r = tape_->constant(model_->prior_mean) - z;
  return ad::matvec(model_->prior_precision, r);
}

ad::var model_terms::log_lik(const dataset& data, ad::var z,
                             ad::var weights) const {
  const ad::var s = ad::matvec(data.x, z);
  const ad::var y = tape_->constant(data.y);
  if (model_->kind == likelihood_kind::linear) {
    const ad::var r = y - s;
    ad::var sq = ad::square(r);
    ad::var count;
    if (weights.valid()) {
      sq = weights * sq;
      count = ad::sum(weights);
    } else {
      count = tape_->constant(static_cast<double>(data.size()));
    }
    const ad::var inv_var = ad::exp(-2.0 * log_sigma_);
    return -(count * (log_sigma_ + half_log_two_pi)) -
           0.5 * inv_var * ad::sum(sq);
  }
  // y log sig(s) + (1 - y) log sig(-s) == y s + log sig(-s)
  ad::var terms = y * s + ad::log_sigmoid(-s);
  if (weights.valid()) terms = weights * terms;
  return ad::sum(terms);
}

ad::var model_terms::lik_score(const dataset& data, ad::var z,
                               ad::var weights) const {
  const ad::var s = ad::matvec(data.x, z);
  const ad::var y = tape_->constant(data.y);
  ad::var r = model_->kind == likelihood_kind::linear ? y - s
                                                      : y - ad::sigmoid(s);
  if (weights.valid()) r = weights * r;
  ad::var g = ad::matvec(data.x, r, /*transpose=*/true);
  if (model_->kind == likelihood_kind::linear) {
    g = ad::exp(-2.0 * log_sigma_) * g;
  }
  return g;
}

ad::var log_lik_subset(const model_terms& terms, const dataset& data,
                       ad::var z, std::span<const std::size_t> indices) {
  if (indices.empty()) return terms.tape().constant(0.0);
  const dataset part = data.subset(indices);
  return terms.log_lik(part, z);
}

double log_prior(const model_density& model, const Eigen::VectorXd& z) {
  ad::tape t;
  model_terms terms(t, model);
  return terms.log_prior(t.constant(z)).scalar();
}

double log_lik_subset(const model_density& model, const dataset& data,
                      const Eigen::VectorXd& z,
                      std::span<const std::size_t> indices) {
  ad::tape t;
  model_terms terms(t, model);
  return log_lik_subset(terms, data, t.constant(z), indices).scalar();
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace sldais
