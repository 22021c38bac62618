#include <doctest.h>

#include <cmath>

#include "sldais/anneal.hpp"
#include "sldais/sampling.hpp"

using namespace sldais;

TEST_CASE("betas examples") {
  annealing_state a = annealing_state::initial(4, 1);
  const Eigen::VectorXd b = betas(a);
  CHECK(b == Eigen::Vector4d(0.25, 0.5, 0.75, 1.0));

  annealing_state one = annealing_state::initial(1, 1);
  one.raw_beta << 3.7;
  CHECK(betas(one)[0] == 1.0);

  annealing_state two = annealing_state::initial(2, 1);
  two.raw_beta << 0.0, std::log(3.0);
  CHECK(betas(two)[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(betas(two)[1] == 1.0);

  annealing_state none = annealing_state::initial(0, 1);
  CHECK_THROWS_AS(betas(none), ad::usage_error);
}

TEST_CASE("step_size examples") {
  annealing_state a = annealing_state::initial(4, 1);
  a.eta_tilde = 0.3;
  a.kappa = 0.0;
  CHECK(step_size(a, 0.7) == 0.25);
  a.eta_tilde = 0.1;
  a.kappa = 0.2;
  CHECK(step_size(a, 0.5) == doctest::Approx(0.2).epsilon(1e-15));
  a.eta_tilde = -0.1;
  a.kappa = 0.0;
  CHECK(step_size(a, 0.3) == 0.0);
  CHECK(step_size(a, 1.0) == 0.0);
}

TEST_CASE("mass_diag examples") {
  annealing_state a = annealing_state::initial(2, 3);
  CHECK(mass_diag(a) == Eigen::Vector3d::Ones());
  annealing_state b = annealing_state::initial(2, 1);
  b.raw_mass << std::log(4.0);
  CHECK(mass_diag(b)[0] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("initial values") {
  const annealing_state a = annealing_state::initial(5, 2, 0.004);
  CHECK(gamma_of(a) == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(a.kappa == 0.0);
  CHECK(a.eta_tilde == 0.004);
  CHECK(a.eta_max == 0.25);
  CHECK(a.parameter_count() == 5 + 3 + 2);
}

TEST_CASE("property: betas strictly increase and end at one") {
  rng_engine rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + trial % 40;
    annealing_state a = annealing_state::initial(k, 1);
    a.raw_beta = 3.0 * standard_normal(k, rng);
    const Eigen::VectorXd b = betas(a);
    CHECK(std::abs(b[b.size() - 1] - 1.0) <= 1e-12);
    CHECK(b[0] > 0.0);
    for (Eigen::Index i = 1; i < b.size(); ++i) CHECK(b[i] > b[i - 1]);
  }
}

TEST_CASE("property: step size stays within bounds") {
  rng_engine rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    annealing_state a = annealing_state::initial(3, 1);
    a.eta_tilde = u(rng);
    a.kappa = u(rng);
    const double beta = 0.5 * (u(rng) + 1.0) + 1e-9;
    const double eta = step_size(a, beta);
    CHECK(eta >= 0.0);
    CHECK(eta <= a.eta_max);
    const double raw = a.eta_tilde + a.kappa * beta;
    if (raw > 0.0 && raw < a.eta_max) CHECK(eta == raw);
  }
}

TEST_CASE("gamma transform") {
  CHECK(gamma_from_raw(raw_gamma_for(0.3)) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(gamma_from_raw(1e6) <= gamma_ceiling);
  CHECK(gamma_from_raw(-1e6) >= 0.0);
  CHECK_THROWS(raw_gamma_for(0.9995));
  annealing_state a = annealing_state::initial(2, 1);
  a.fixed_gamma = 0.0;
  CHECK(gamma_of(a) == 0.0);
}

TEST_CASE("tape terms match the plain transforms") {
  annealing_state a = annealing_state::initial(6, 2);
  a.raw_beta << 0.1, -0.3, 0.5, 0.0, 0.2, 1.0;
  a.eta_tilde = 0.05;
  a.kappa = 0.3;
  a.raw_gamma = 0.7;
  a.raw_mass << 0.2, -0.4;
  ad::tape t;
  const anneal_terms terms(t, a);
  const Eigen::VectorXd b = betas(a);
  for (std::size_t k = 1; k <= 6; ++k) {
    CHECK(terms.beta(k).scalar() == doctest::Approx(b[k - 1]).epsilon(1e-15));
    CHECK(terms.eta(k).scalar() ==
          doctest::Approx(step_size(a, b[k - 1])).epsilon(1e-15));
  }
  CHECK(terms.gamma().scalar() == doctest::Approx(gamma_of(a)).epsilon(1e-15));
  CHECK((terms.mass().value() - mass_diag(a)).norm() < 1e-15);

  annealing_state copy = a;
  copy.assign(a.flatten());
  CHECK(copy.flatten() == a.flatten());
}
