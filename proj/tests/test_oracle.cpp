#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sldais/oracle.hpp"
#include "sldais/synthetic.hpp"

using namespace sldais;
using oracle::gaussian_moments;

namespace {

gaussian_moments standard_prior(Eigen::Index d) {
  return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
}

}  // namespace

TEST_CASE("one-dimensional worked example") {
  // prior N(0, 1), one point x = 1, y = 2, sigma = 1
  const dataset d = dataset::make(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, 2.0));
  const auto post = oracle::exact_posterior(standard_prior(1), &d, 1.0);
  CHECK(post.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(post.covariance()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  // y ~ N(0, 2)
  const double expected = -0.5 * std::log(2.0 * std::numbers::pi * 2.0) - 1.0;
  CHECK(oracle::log_evidence(standard_prior(1), &d, 1.0) ==
        doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("no data returns the prior and zero evidence") {
  const auto prior = standard_prior(3);
  const auto post = oracle::exact_posterior(prior, nullptr, 1.0);
  CHECK(post.mean == prior.mean);
  CHECK(post.precision == prior.precision);
  CHECK(oracle::log_evidence(prior, nullptr, 1.0) == 0.0);
}

TEST_CASE("Bayes identity evidence agrees with the direct marginal") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    synthetic_spec s;
    s.n = 40;
    s.dim = 4;
    s.seed = seed;
    s.sigma_obs = 0.5 + 0.3 * static_cast<double>(seed);
    const auto g = generate(s);
    gaussian_moments prior;
    prior.mean = Eigen::Vector4d(0.1, -0.2, 0.0, 0.5);
    Eigen::Matrix4d a = Eigen::Matrix4d::Random();
    prior.precision = a * a.transpose() + Eigen::Matrix4d::Identity();
    const double lz = oracle::log_evidence(prior, &g.data, s.sigma_obs);
    const double direct = oracle::log_evidence_direct(prior, g.data, s.sigma_obs);
    CHECK(std::abs(lz - direct) <= 1e-8 * std::max(1.0, std::abs(direct)));
  }
}

TEST_CASE("sequential conditioning matches batch conditioning") {
  synthetic_spec s;
  s.n = 30;
  s.dim = 3;
  s.seed = 8;
  const auto g = generate(s);
  const auto prior = standard_prior(3);
  std::vector<std::size_t> first(10), rest(20);
  for (std::size_t i = 0; i < 10; ++i) first[i] = i;
  for (std::size_t i = 0; i < 20; ++i) rest[i] = 10 + i;
  const dataset a = g.data.subset(first);
  const dataset b = g.data.subset(rest);
  const auto mid = oracle::exact_posterior(prior, &a, 1.0);
  const auto seq = oracle::exact_posterior(mid, &b, 1.0);
  const auto all = oracle::exact_posterior(prior, &g.data, 1.0);
  CHECK((seq.mean - all.mean).norm() < 1e-12);
  CHECK((seq.precision - all.precision).norm() < 1e-10);
  // evidence chain rule
  const double chained = oracle::log_evidence(prior, &a, 1.0) +
                         oracle::log_evidence(mid, &b, 1.0);
  CHECK(chained == doctest::Approx(oracle::log_evidence(prior, &g.data, 1.0))
                       .epsilon(1e-12));
}

TEST_CASE("likelihood quadratic gives the log-likelihood gradient") {
  synthetic_spec s;
  s.n = 15;
  s.dim = 2;
  s.seed = 4;
  const auto g = generate(s);
  const auto q = oracle::likelihood_quadratic_of(g.data, 1.3);
  const auto model = model_density::linear(Eigen::Vector2d::Zero(),
                                           Eigen::Matrix2d::Identity(), 1.3);
  ad::tape t;
  model_terms terms(t, model);
  const Eigen::Vector2d z0(0.4, -0.9);
  const ad::var z = t.variable(z0);
  const ad::var wrt[] = {z};
  const Eigen::VectorXd grad = t.gradient(terms.log_lik(g.data, z), wrt)[0];
  CHECK((grad - (q.a - q.b * z0)).norm() < 1e-12);
}

TEST_CASE("aggregate pseudo-posterior") {
  synthetic_spec s;
  s.n = 6;
  s.dim = 2;
  s.seed = 3;
  const auto g = generate(s);
  const auto prior = standard_prior(2);
  const auto full = oracle::aggregate_pseudo_posterior(prior, g.data, 1.0, 6);
  const auto post = oracle::exact_posterior(prior, &g.data, 1.0);
  CHECK(full.components.size() == 1);
  CHECK((full.mean - post.mean).norm() < 1e-12);
  CHECK((full.covariance - post.covariance()).norm() < 1e-12);

  const auto mix = oracle::aggregate_pseudo_posterior(prior, g.data, 1.0, 2);
  CHECK(mix.components.size() == 15);
  // mixture covariance dominates the average component covariance
  Eigen::Matrix2d avg = Eigen::Matrix2d::Zero();
  for (const auto& c : mix.components) avg += c.covariance();
  avg /= 15.0;
  const Eigen::Vector2cd ev = (mix.covariance - avg).eigenvalues();
  CHECK(ev.real().minCoeff() >= -1e-12);

  CHECK_THROWS_AS(oracle::aggregate_pseudo_posterior(prior, g.data, 1.0, 0),
                  ad::usage_error);
  CHECK_THROWS_AS(oracle::aggregate_pseudo_posterior(prior, g.data, 1.0, 7),
                  ad::usage_error);
  CHECK(oracle::capped_binomial(6, 2) == 15);
  CHECK(oracle::capped_binomial(1000, 500) == oracle::max_enumerated_subsets + 1);
}

TEST_CASE("surrogate posterior and trace term") {
  const gaussian_moments post{Eigen::Vector2d(1.0, -1.0),
                              (Eigen::Matrix2d() << 4.0, 1.0, 1.0, 3.0).finished()};
  const auto same = oracle::surrogate_posterior(post, Eigen::Vector2d::Zero(),
                                                Eigen::Matrix2d::Zero());
  CHECK((same.mean - post.mean).norm() < 1e-14);
  CHECK(oracle::surrogate_trace_term(post, Eigen::Matrix2d::Zero()) == 0.0);
  const Eigen::Matrix2d db = Eigen::Matrix2d::Identity();
  CHECK(oracle::surrogate_trace_term(post, db) ==
        doctest::Approx(post.covariance().trace()).epsilon(1e-14));
}

TEST_CASE("errors") {
  const auto prior = standard_prior(1);
  const dataset d = dataset::make(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1));
  CHECK_THROWS_AS(oracle::exact_posterior(prior, &d, 0.0), oracle::numeric_error);
  const gaussian_moments bad{Eigen::VectorXd::Zero(1), -Eigen::MatrixXd::Identity(1, 1)};
  CHECK_THROWS_AS(bad.covariance(), oracle::numeric_error);
}
