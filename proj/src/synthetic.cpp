#include "sldais/synthetic.hpp"

#include <set>
#include <string>

#include "sldais/config.hpp"
#include "sldais/sampling.hpp"

namespace sldais {

synthetic_data generate(const synthetic_spec& spec) {
  if (spec.n < 1 || spec.dim < 1) {
    throw config_error("synthetic data needs N >= 1 and D >= 1");
  }
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const auto n = static_cast<Eigen::Index>(spec.n);
  const Eigen::VectorXd mean =
      spec.prior_mean.size() ? spec.prior_mean : Eigen::VectorXd::Zero(d);
  const Eigen::MatrixXd precision = spec.prior_precision.size()
                                        ? spec.prior_precision
                                        : Eigen::MatrixXd::Identity(d, d);
  if (mean.size() != d || precision.rows() != d || precision.cols() != d) {
    throw config_error("synthetic prior does not match D");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw config_error("synthetic prior precision is not positive definite");
  }

  rng_engine rng(spec.seed);
  // z* = mean + U^{-1} e where precision = U^T U, so cov(z*) = precision^{-1}.
  const Eigen::VectorXd e = standard_normal(spec.dim, rng);
  const Eigen::VectorXd z_true = mean + llt.matrixU().solve(e);

  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = standard_normal(spec.dim, rng).transpose();
  }
  const Eigen::VectorXd noise = standard_normal(spec.n, rng);
  Eigen::VectorXd y(n);
  const Eigen::VectorXd s = x * z_true;
  if (spec.kind == likelihood_kind::linear) {
    y = s + spec.sigma_obs * noise;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      y[i] = s[i] + spec.label_noise * noise[i] > 0.0 ? 1.0 : 0.0;
    }
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < spec.dim; ++c) {
    names.push_back("x" + std::to_string(c + 1));
  }
  return {dataset::make(std::move(x), std::move(y), std::move(names)), z_true};
}

synthetic_spec synthetic_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {
      "model", "N", "D", "seed", "sigma_obs", "label_noise", "prior"};
  if (!j.is_object()) throw config_error("generator spec must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!keys.count(it.key())) {
      throw config_error("unknown generator field '" + it.key() + "'");
    }
  }
  synthetic_spec s;
  try {
    if (j.contains("model")) {
      s.kind = likelihood_kind_from_string(j.at("model").get<std::string>());
    }
    s.n = j.value("N", s.n);
    s.dim = j.value("D", s.dim);
    s.seed = j.value("seed", s.seed);
    s.sigma_obs = j.value("sigma_obs", s.sigma_obs);
    s.label_noise = j.value("label_noise", s.label_noise);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("generator spec: ") + e.what());
  } catch (const data_error& e) {
    throw config_error(e.what());
  }
  if (!(s.sigma_obs > 0.0)) throw config_error("sigma_obs must be positive");
  if (!(s.label_noise >= 0.0)) throw config_error("label_noise must be >= 0");
  if (j.contains("prior")) {
    const prior_spec p = prior_from_json(j.at("prior"), s.dim);
    s.prior_mean = p.mean;
    s.prior_precision = p.precision;
  }
  return s;
}

}  // namespace sldais
