#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sldais/autodiff.hpp"
#include "sldais/checks.hpp"

using namespace sldais;
using ad::var;

TEST_CASE("record examples") {
  ad::tape t;
  CHECK((t.constant(2.0) + t.constant(3.0)).scalar() == 5.0);
  CHECK(ad::log(t.constant(1.0)).scalar() == 0.0);
  CHECK(ad::sigmoid(t.constant(0.0)).scalar() == 0.5);
}

TEST_CASE("gradient examples") {
  SUBCASE("x * x at 3") {
    ad::tape t;
    const var x = t.variable(3.0);
    const var y = x * x;
    const var wrt[] = {x};
    CHECK(t.gradient(y, wrt)[0][0] == doctest::Approx(6.0).epsilon(1e-15));
  }
  SUBCASE("standard normal score at 1") {
    ad::tape t;
    const var z = t.variable(1.0);
    const var lp = -0.5 * ad::square(z) - 0.5 * std::log(2.0 * std::numbers::pi);
    const var wrt[] = {z};
    CHECK(t.gradient(lp, wrt)[0][0] == doctest::Approx(-1.0).epsilon(1e-15));
  }
  SUBCASE("log sigmoid at 0") {
    ad::tape t;
    const var x = t.variable(0.0);
    const var wrt[] = {x};
    CHECK(t.gradient(ad::log_sigmoid(x), wrt)[0][0] ==
          doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("check_gradient examples") {
  const auto fd = [](const checks::objective& f, const Eigen::VectorXd& x) {
    return checks::central_difference(f, x, 1e-5);
  };
  {
    Eigen::VectorXd x0(1);
    x0 << 3.0;
    ad::tape t;
    const var x = t.variable(x0);
    const var wrt[] = {x};
    const Eigen::VectorXd g = t.gradient(ad::sum(x * x), wrt)[0];
    const auto num = fd([](const Eigen::VectorXd& v) { return v.squaredNorm(); }, x0);
    CHECK(checks::max_relative_error(g, num) <= 1e-6);
  }
  {
    Eigen::VectorXd x0 = Eigen::VectorXd::LinSpaced(5, -2.0, 3.0);
    ad::tape t;
    const var x = t.variable(x0);
    const var wrt[] = {x};
    const Eigen::VectorXd g = t.gradient(ad::sum(x), wrt)[0];
    const auto num = fd([](const Eigen::VectorXd& v) { return v.sum(); }, x0);
    CHECK(checks::max_relative_error(g, num) <= 1e-10);
  }
}

TEST_CASE("every op matches central differences on 100 random inputs") {
  for (const auto& g : checks::op_gradients(100, 2024)) {
    INFO(g.name);
    CHECK(g.max_relative_error <= 1e-5);
  }
}

TEST_CASE("non-finite results raise a domain error naming the op") {
  ad::tape t;
  CHECK_THROWS_AS(ad::log(t.constant(-1.0)), ad::numeric_domain_error);
  CHECK_THROWS_AS(t.constant(1.0) / t.constant(0.0), ad::numeric_domain_error);
  try {
    ad::sqrt(t.constant(-4.0));
    FAIL("expected a domain error");
  } catch (const ad::numeric_domain_error& e) {
    CHECK(e.kind() == ad::op_kind::sqrt);
    CHECK(std::string(e.what()).find("sqrt") != std::string::npos);
  }
  CHECK_THROWS_AS(t.variable(std::nan("")), ad::numeric_domain_error);
}

TEST_CASE("usage errors") {
  ad::tape t;
  const var x = t.variable(Eigen::VectorXd::Ones(3));
  const var wrt[] = {x};
  CHECK_THROWS_AS(t.gradient(x * 2.0, wrt), ad::usage_error);
  ad::tape other;
  CHECK_THROWS_AS(x + other.constant(1.0), ad::usage_error);
  CHECK_THROWS_AS(x + t.constant(Eigen::VectorXd::Ones(2)), ad::usage_error);
  const var y = ad::sum(x);
  const var late = t.variable(1.0);
  const var late_wrt[] = {late};
  CHECK_THROWS_AS(t.gradient(y, late_wrt), ad::usage_error);
}

TEST_CASE("scalar broadcast") {
  ad::tape t;
  const var s = t.variable(2.0);
  const var v = t.variable(Eigen::Vector3d(1.0, 2.0, 3.0));
  const var y = ad::sum(s * v);
  CHECK(y.scalar() == 12.0);
  const var wrt[] = {s, v};
  const auto g = t.gradient(y, wrt);
  CHECK(g[0][0] == 6.0);
  CHECK(g[1] == Eigen::Vector3d::Constant(2.0));
}

TEST_CASE("node ids are topologically ordered") {
  ad::tape t;
  var x = t.variable(Eigen::Vector2d(0.3, -0.2));
  for (int i = 0; i < 20; ++i) x = ad::sigmoid(x) * x + 0.1 * ad::exp(-ad::square(x));
  for (std::size_t id = 0; id < t.size(); ++id) {
    for (std::size_t in : t.inputs_of(id)) CHECK(in < id);
  }
}

TEST_CASE("reverse sweep visits each node at most once") {
  for (int depth : {10, 100, 1000}) {
    ad::tape t;
    const var x = t.variable(Eigen::Vector3d(0.1, 0.2, 0.3));
    var y = x;
    // Heavy fan-out: every node feeds two later nodes.
    for (int i = 0; i < depth; ++i) y = y * 0.5 + ad::sigmoid(y);
    const var out = ad::sum(y);
    const var wrt[] = {x};
    t.gradient(out, wrt);
    CHECK(t.last_sweep_visits() <= t.size());
  }
}

TEST_CASE("gradient does not modify the tape and replays bit for bit") {
  ad::tape t;
  const var x = t.variable(Eigen::Vector3d(0.7, -1.1, 2.5));
  const var y = ad::sum(ad::log_sigmoid(x) * ad::exp(-x) + ad::cumsum(x));
  const std::size_t before = t.size();
  const var wrt[] = {x};
  const auto g1 = t.gradient(y, wrt);
  const auto g2 = t.gradient(y, wrt);
  CHECK(t.size() == before);
  CHECK(g1[0] == g2[0]);
  CHECK(t.replay_matches());
}

TEST_CASE("recording is deterministic") {
  const auto run = [] {
    ad::tape t;
    const var x = t.variable(Eigen::Vector4d(0.1, -0.5, 1.5, 2.0));
    auto a = std::make_shared<const Eigen::MatrixXd>(Eigen::MatrixXd::Identity(4, 4) * 0.3);
    const var y = ad::dot(ad::affine(a, x, x), ad::sqrt(ad::exp(x)));
    const var wrt[] = {x};
    return std::make_pair(y.scalar(), t.gradient(y, wrt)[0]);
  };
  const auto r1 = run();
  const auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}

TEST_CASE("clip passes gradient only inside the bounds") {
  ad::tape t;
  const var x = t.variable(Eigen::Vector3d(-2.0, 0.5, 3.0));
  const var wrt[] = {x};
  const auto g = t.gradient(ad::sum(ad::clip(x, 0.0, 1.0)), wrt)[0];
  CHECK(g == Eigen::Vector3d(0.0, 1.0, 0.0));
}

TEST_CASE("log_sigmoid is stable for large arguments") {
  ad::tape t;
  CHECK(ad::log_sigmoid(t.constant(-800.0)).scalar() == doctest::Approx(-800.0));
  CHECK(ad::log_sigmoid(t.constant(800.0)).scalar() == 0.0);
  const var x = t.variable(-800.0);
  const var wrt[] = {x};
  CHECK(t.gradient(ad::log_sigmoid(x), wrt)[0][0] == doctest::Approx(1.0));
}

TEST_CASE("triangular helpers") {
  ad::tape t;
  // packed raw (0, 0.5, 0) -> L = [[1, 0], [0.5, 1]]
  const var l = ad::tril_from_raw(t.constant(Eigen::Vector3d(0.0, 0.5, 0.0)));
  const var u = ad::tril_matvec(l, t.constant(Eigen::Vector2d(1.0, 0.0)));
  CHECK(u.value() == Eigen::Vector2d(1.0, 0.5));
  const var back = ad::tril_solve(l, u);
  CHECK((back.value() - Eigen::Vector2d(1.0, 0.0)).norm() < 1e-15);
  CHECK(ad::tril_dim_from_packed(6) == 3);
  CHECK_THROWS_AS(ad::tril_dim_from_packed(5), ad::usage_error);
}
