#pragma once

// Reparameterizable Gaussian base distributions q0(z).
//
// Mean-field:  z = loc + exp(log_scale) * eps
// Full-rank:   z = loc + L eps, with L lower triangular and its diagonal
//              stored in log space (packed row-major in `tril_raw`).

#include <cstddef>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "sldais/autodiff.hpp"

namespace sldais {

enum class base_kind { mean_field, full_rank };

const char* to_string(base_kind kind);
base_kind base_kind_from_string(const std::string& name);

struct base_distribution {
  base_kind kind = base_kind::mean_field;
  Eigen::VectorXd loc;
  Eigen::VectorXd log_scale;  // mean-field only
  Eigen::VectorXd tril_raw;   // full-rank only, size D(D+1)/2

  // loc = 0 with unit scale (L = I).
  static base_distribution standard(base_kind kind, std::size_t dim);
  // Matches N(mean, cov). A mean-field result keeps only the diagonal of cov.
  static base_distribution from_gaussian(base_kind kind,
                                         const Eigen::VectorXd& mean,
                                         const Eigen::MatrixXd& cov);

  std::size_t dim() const { return static_cast<std::size_t>(loc.size()); }
  std::size_t parameter_count() const;

  // Dense lower-triangular scale factor (diagonal for mean-field).
  Eigen::MatrixXd scale_factor() const;
  Eigen::MatrixXd covariance() const;

  // Flattened as [loc, log_scale] or [loc, tril_raw].
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
};

// q0 terms recorded on a tape from a flattened parameter variable.
class base_terms {
 public:
  base_terms(ad::tape& tape, base_kind kind, std::size_t dim, ad::var params);
  // Parameters enter as constants.
  base_terms(ad::tape& tape, const base_distribution& q);

  ad::var sample(ad::var eps) const;
  ad::var log_density(ad::var z) const;
  // Gradient of log_density with respect to z.
  ad::var score(ad::var z) const;

 private:
  ad::tape* tape_;
  base_kind kind_;
  std::size_t dim_;
  ad::var loc_;
  ad::var log_scale_;   // mean-field
  ad::var inv_var_;     // mean-field, exp(-2 log_scale)
  ad::var tril_;        // full-rank, dense row-major L
  ad::var log_det_;     // sum of log diagonal scales
};

Eigen::VectorXd sample_reparam(const base_distribution& q,
                               const Eigen::VectorXd& eps);
double log_density(const base_distribution& q, const Eigen::VectorXd& z);

// {kind, loc:[...], log_scale:[...]} or {kind, loc:[...], tril_rows:[[...]]}
// where tril_rows holds the rows of L (row i has i+1 entries). Full-rank
// output also carries the packed raw parameters as tril_raw, which take
// precedence on load so that a round trip is exact.
nlohmann::json to_json(const base_distribution& q);
base_distribution base_distribution_from_json(const nlohmann::json& j);

}  // namespace sldais
