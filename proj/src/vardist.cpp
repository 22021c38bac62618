#include "sldais/vardist.hpp"

#include <cmath>
#include <stdexcept>

namespace sldais {

namespace {

constexpr double half_log_two_pi = 0.91893853320467274178;

std::vector<Eigen::Index> diagonal_positions(std::size_t dim) {
  std::vector<Eigen::Index> pos;
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    k += static_cast<Eigen::Index>(i);
    pos.push_back(k);
    k += 1;
  }
  return pos;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace

const char* to_string(base_kind kind) {
  return kind == base_kind::mean_field ? "mean-field" : "full-rank";
}

base_kind base_kind_from_string(const std::string& name) {
  if (name == "mean-field") return base_kind::mean_field;
  if (name == "full-rank") return base_kind::full_rank;
  throw std::invalid_argument("unknown base distribution kind '" + name +
                              "' (expected mean-field or full-rank)");
}

base_distribution base_distribution::standard(base_kind kind,
                                              std::size_t dim) {
  base_distribution q;
  q.kind = kind;
  q.loc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  if (kind == base_kind::mean_field) {
    q.log_scale = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  } else {
    // off-diagonals 0, log-diagonal 0
    q.tril_raw =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim * (dim + 1) / 2));
  }
  return q;
}

base_distribution base_distribution::from_gaussian(
    base_kind kind, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const auto dim = static_cast<std::size_t>(mean.size());
  base_distribution q = standard(kind, dim);
  q.loc = mean;
  if (kind == base_kind::mean_field) {
    q.log_scale = 0.5 * cov.diagonal().array().log().matrix();
    return q;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("covariance is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j, ++k) {
      q.tril_raw[k] = (i == j) ? std::log(l(i, j)) : l(i, j);
    }
  }
  return q;
}

std::size_t base_distribution::parameter_count() const {
  const std::size_t d = dim();
  return kind == base_kind::mean_field ? 2 * d : d + d * (d + 1) / 2;
}

Eigen::MatrixXd base_distribution::scale_factor() const {
  const auto d = loc.size();
  if (kind == base_kind::mean_field) {
    return log_scale.array().exp().matrix().asDiagonal();
  }
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j, ++k) {
      l(i, j) = (i == j) ? std::exp(tril_raw[k]) : tril_raw[k];
    }
  }
  return l;
}

Eigen::MatrixXd base_distribution::covariance() const {
  const Eigen::MatrixXd l = scale_factor();
  return l * l.transpose();
}

Eigen::VectorXd base_distribution::flatten() const {
  const Eigen::VectorXd& scale =
      kind == base_kind::mean_field ? log_scale : tril_raw;
  Eigen::VectorXd flat(loc.size() + scale.size());
  flat << loc, scale;
  return flat;
}

void base_distribution::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw std::invalid_argument("base distribution parameter size mismatch");
  }
  const auto d = loc.size();
  loc = flat.head(d);
  if (kind == base_kind::mean_field) {
    log_scale = flat.tail(d);
  } else {
    tril_raw = flat.tail(flat.size() - d);
  }
}

base_terms::base_terms(ad::tape& tape, base_kind kind, std::size_t dim,
                       ad::var params)
    : tape_(&tape), kind_(kind), dim_(dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<Eigen::Index> head(dim);
  for (Eigen::Index i = 0; i < d; ++i) head[i] = i;
  loc_ = ad::gather(params, head);
  std::vector<Eigen::Index> tail;
  for (Eigen::Index i = d; i < params.size(); ++i) tail.push_back(i);
  const ad::var scale = ad::gather(params, tail);
  if (kind == base_kind::mean_field) {
    if (scale.size() != d) {
      throw ad::usage_error("mean-field parameters must have size 2D");
    }
    log_scale_ = scale;
    inv_var_ = ad::exp(-2.0 * scale);
    log_det_ = ad::sum(scale);
  } else {
    if (ad::tril_dim_from_packed(scale.size()) != d) {
      throw ad::usage_error("full-rank parameters must have size D + D(D+1)/2");
    }
    tril_ = ad::tril_from_raw(scale);
    log_det_ = ad::sum(ad::gather(scale, diagonal_positions(dim)));
  }
}

base_terms::base_terms(ad::tape& tape, const base_distribution& q)
    : base_terms(tape, q.kind, q.dim(), tape.constant(q.flatten())) {}

ad::var base_terms::sample(ad::var eps) const {
  if (kind_ == base_kind::mean_field) {
    return loc_ + ad::exp(log_scale_) * eps;
  }
  return loc_ + ad::tril_matvec(tril_, eps);
}

ad::var base_terms::log_density(ad::var z) const {
  const ad::var r = z - loc_;
  ad::var quad;
  if (kind_ == base_kind::mean_field) {
    quad = ad::sum(ad::square(r) * inv_var_);
  } else {
    const ad::var u = ad::tril_solve(tril_, r);
    quad = ad::dot(u, u);
  }
  const double norm = static_cast<double>(dim_) * half_log_two_pi;
  return -0.5 * quad - log_det_ - norm;
}

ad::var base_terms::score(ad::var z) const {
  const ad::var r = loc_ - z;
  if (kind_ == base_kind::mean_field) return r * inv_var_;
  return ad::tril_solve_transposed(tril_, ad::tril_solve(tril_, r));
}

Eigen::VectorXd sample_reparam(const base_distribution& q,
                               const Eigen::VectorXd& eps) {
  ad::tape t;
  base_terms terms(t, q);
  return terms.sample(t.constant(eps)).value();
}

double log_density(const base_distribution& q, const Eigen::VectorXd& z) {
  ad::tape t;
  base_terms terms(t, q);
  return terms.log_density(t.constant(z)).scalar();
}

nlohmann::json to_json(const base_distribution& q) {
  nlohmann::json j;
  j["kind"] = to_string(q.kind);
  j["loc"] = to_std(q.loc);
  if (q.kind == base_kind::mean_field) {
    j["log_scale"] = to_std(q.log_scale);
  } else {
    const Eigen::MatrixXd l = q.scale_factor();
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c <= i; ++c) row.push_back(l(i, c));
      rows.push_back(row);
    }
    j["tril_rows"] = rows;
    j["tril_raw"] = to_std(q.tril_raw);
  }
  return j;
}

base_distribution base_distribution_from_json(const nlohmann::json& j) {
  const base_kind kind = base_kind_from_string(j.at("kind").get<std::string>());
  const auto loc = j.at("loc").get<std::vector<double>>();
  base_distribution q = base_distribution::standard(kind, loc.size());
  q.loc = Eigen::Map<const Eigen::VectorXd>(
      loc.data(), static_cast<Eigen::Index>(loc.size()));
  if (kind == base_kind::mean_field) {
    const auto ls = j.at("log_scale").get<std::vector<double>>();
    if (ls.size() != loc.size()) {
      throw std::invalid_argument("log_scale length does not match loc");
    }
    q.log_scale = Eigen::Map<const Eigen::VectorXd>(
        ls.data(), static_cast<Eigen::Index>(ls.size()));
    return q;
  }
  if (j.contains("tril_raw")) {
    const auto raw = j.at("tril_raw").get<std::vector<double>>();
    if (raw.size() != static_cast<std::size_t>(q.tril_raw.size())) {
      throw std::invalid_argument("tril_raw has the wrong length");
    }
    q.tril_raw = Eigen::Map<const Eigen::VectorXd>(
        raw.data(), static_cast<Eigen::Index>(raw.size()));
    return q;
  }
  const auto rows = j.at("tril_rows").get<std::vector<std::vector<double>>>();
  if (rows.size() != loc.size()) {
    throw std::invalid_argument("tril_rows count does not match loc");
  }
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != i + 1) {
      throw std::invalid_argument("tril_rows row " + std::to_string(i) +
                                  " must have " + std::to_string(i + 1) +
                                  " entries");
    }
    for (std::size_t c = 0; c <= i; ++c, ++k) {
      if (c == i) {
        if (!(rows[i][c] > 0.0)) {
          throw std::invalid_argument("tril_rows diagonal must be positive");
        }
        q.tril_raw[k] = std::log(rows[i][c]);
      } else {
        q.tril_raw[k] = rows[i][c];
      }
    }
  }
  return q;
}

}  // namespace sldais
