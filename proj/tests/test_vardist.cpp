#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sldais/checks.hpp"
#include "sldais/sampling.hpp"
#include "sldais/vardist.hpp"

using namespace sldais;

namespace {

base_distribution full_rank_with(const Eigen::VectorXd& loc,
                                 const Eigen::MatrixXd& l) {
  base_distribution q = base_distribution::standard(base_kind::full_rank, loc.size());
  q.loc = loc;
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j, ++k) {
      q.tril_raw[k] = i == j ? std::log(l(i, j)) : l(i, j);
    }
  }
  return q;
}

}  // namespace

TEST_CASE("sample_reparam examples") {
  base_distribution mf = base_distribution::standard(base_kind::mean_field, 2);
  mf.loc << 0.3, -0.2;
  CHECK(sample_reparam(mf, Eigen::VectorXd::Zero(2)) == mf.loc);
  mf.loc.setZero();
  CHECK(sample_reparam(mf, Eigen::Vector2d(1.0, -1.0)) == Eigen::Vector2d(1.0, -1.0));

  Eigen::Matrix2d l;
  l << 1.0, 0.0, 0.5, 1.0;
  const base_distribution fr = full_rank_with(Eigen::VectorXd::Zero(2), l);
  CHECK((sample_reparam(fr, Eigen::Vector2d(1.0, 0.0)) - Eigen::Vector2d(1.0, 0.5))
            .norm() < 1e-15);
}

TEST_CASE("log_density examples") {
  const auto mf = base_distribution::standard(base_kind::mean_field, 1);
  CHECK(log_density(mf, Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  const auto fr = base_distribution::standard(base_kind::full_rank, 2);
  CHECK(log_density(fr, Eigen::VectorXd::Zero(2)) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-15));

  Eigen::Matrix2d l;
  l << 1.3, 0.0, -0.4, 0.6;
  const base_distribution q = full_rank_with(Eigen::Vector2d(0.2, 1.0), l);
  const double at_loc = log_density(q, q.loc);
  for (const Eigen::Vector2d dz : {Eigen::Vector2d(0.01, 0.0), Eigen::Vector2d(0.0, -0.3),
                                   Eigen::Vector2d(0.5, 0.5)}) {
    CHECK(log_density(q, q.loc + dz) < at_loc);
  }
}

TEST_CASE("sampling matches moments within 3 standard errors") {
  Eigen::Matrix2d l;
  l << 0.8, 0.0, 0.6, 1.5;
  const base_distribution q = full_rank_with(Eigen::Vector2d(1.0, -2.0), l);
  const Eigen::Matrix2d cov = q.covariance();
  rng_engine rng(77);
  const int n = 100000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d outer = Eigen::Matrix2d::Zero();
  std::vector<Eigen::Vector2d> draws;
  draws.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d z = sample_reparam(q, standard_normal(2, rng));
    draws.push_back(z);
    sum += z;
  }
  const Eigen::Vector2d mean = sum / n;
  for (const auto& z : draws) outer += (z - mean) * (z - mean).transpose();
  const Eigen::Matrix2d emp = outer / (n - 1);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mean[i] - q.loc[i]) <= 3.0 * std::sqrt(cov(i, i) / n));
    for (int j = 0; j < 2; ++j) {
      // var of the (i, j) sample covariance for a Gaussian
      const double se =
          std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
      CHECK(std::abs(emp(i, j) - cov(i, j)) <= 3.0 * se);
    }
  }
}

TEST_CASE("density integrates to one in one dimension") {
  base_distribution q = base_distribution::standard(base_kind::mean_field, 1);
  q.loc << 0.7;
  q.log_scale << std::log(1.7);
  const double s = 1.7;
  const int m = 20000;
  const double lo = 0.7 - 8.0 * s, hi = 0.7 + 8.0 * s;
  const double h = (hi - lo) / m;
  double total = 0.0;
  for (int i = 0; i <= m; ++i) {
    const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    total += w * std::exp(log_density(q, Eigen::VectorXd::Constant(1, lo + i * h)));
  }
  CHECK(std::abs(total * h / 3.0 - 1.0) <= 1e-6);
}

TEST_CASE("diagonal full-rank agrees with mean-field") {
  base_distribution mf = base_distribution::standard(base_kind::mean_field, 3);
  mf.loc << 0.1, -0.2, 0.3;
  mf.log_scale << 0.4, -0.5, 0.2;
  const base_distribution fr = full_rank_with(
      mf.loc, mf.log_scale.array().exp().matrix().asDiagonal());
  rng_engine rng(5);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd z = 2.0 * standard_normal(3, rng);
    CHECK(std::abs(log_density(mf, z) - log_density(fr, z)) <= 1e-12);
  }
}

TEST_CASE("tape terms agree with plain values and have correct gradients") {
  for (auto kind : {base_kind::mean_field, base_kind::full_rank}) {
    base_distribution q = base_distribution::standard(kind, 3);
    rng_engine rng(kind == base_kind::full_rank ? 1 : 2);
    Eigen::VectorXd flat = q.flatten() + 0.3 * standard_normal(q.parameter_count(), rng);
    q.assign(flat);
    const Eigen::VectorXd eps = standard_normal(3, rng);
    const auto f = [&](const Eigen::VectorXd& p, Eigen::VectorXd* g) {
      ad::tape t;
      const ad::var params = t.variable(p);
      const base_terms terms(t, kind, 3, params);
      const ad::var z = terms.sample(t.constant(eps));
      const ad::var val = terms.log_density(z) + ad::sum(ad::square(z));
      if (g) {
        const ad::var wrt[] = {params};
        *g = t.gradient(val, wrt)[0];
      }
      return val.scalar();
    };
    ad::tape t;
    const base_terms terms(t, q);
    const ad::var z = terms.sample(t.constant(eps));
    CHECK((z.value() - sample_reparam(q, eps)).norm() < 1e-14);
    CHECK(std::abs(terms.log_density(z).scalar() - log_density(q, z.value())) < 1e-13);

    Eigen::VectorXd g;
    f(flat, &g);
    const auto fd = checks::central_difference(
        [&](const Eigen::VectorXd& p) { return f(p, nullptr); }, flat);
    CHECK(checks::max_relative_error(g, fd) <= 1e-5);

    // score is the z-gradient of the log-density
    ad::tape t2;
    const base_terms terms2(t2, q);
    const ad::var zz = t2.variable(eps);
    const ad::var wrt[] = {zz};
    CHECK((t2.gradient(terms2.log_density(zz), wrt)[0] - terms2.score(zz).value())
              .norm() < 1e-12);
  }
}

TEST_CASE("from_gaussian reproduces the covariance") {
  Eigen::Matrix2d cov;
  cov << 2.0, 0.5, 0.5, 1.0;
  const auto fr = base_distribution::from_gaussian(base_kind::full_rank,
                                                   Eigen::Vector2d(1, 2), cov);
  CHECK((fr.covariance() - cov).norm() < 1e-14);
  const auto mf = base_distribution::from_gaussian(base_kind::mean_field,
                                                   Eigen::Vector2d(1, 2), cov);
  CHECK((mf.covariance() - Eigen::Matrix2d(cov.diagonal().asDiagonal())).norm() < 1e-14);
}

TEST_CASE("json round trip") {
  for (auto kind : {base_kind::mean_field, base_kind::full_rank}) {
    base_distribution q = base_distribution::standard(kind, 3);
    rng_engine rng(3);
    q.assign(q.flatten() + standard_normal(q.parameter_count(), rng));
    const nlohmann::json j = to_json(q);
    CHECK(j.at("kind") == to_string(kind));
    if (kind == base_kind::full_rank) {
      CHECK(j.at("tril_rows").size() == 3);
      CHECK(j.at("tril_rows")[2].size() == 3);
    } else {
      CHECK(j.contains("log_scale"));
    }
    const base_distribution back =
        base_distribution_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.flatten() == q.flatten());
  }
  // tril_rows alone, with the factor stored directly
  const nlohmann::json j = {{"kind", "full-rank"},
                            {"loc", {0.0, 0.0}},
                            {"tril_rows", {{2.0}, {0.5, 1.0}}}};
  const base_distribution q = base_distribution_from_json(j);
  CHECK((q.scale_factor() - (Eigen::Matrix2d() << 2.0, 0.0, 0.5, 1.0).finished())
            .norm() < 1e-15);
  const nlohmann::json bad = {{"kind", "full-rank"},
                              {"loc", {0.0}},
                              {"tril_rows", {{-1.0}}}};
  CHECK_THROWS(base_distribution_from_json(bad));
}
