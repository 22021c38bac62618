#include "sldais/checks.hpp"

#include <cmath>
#include <memory>
#include <sstream>

#include "sldais/dais.hpp"
#include "sldais/oracle.hpp"
#include "sldais/sampling.hpp"
#include "sldais/synthetic.hpp"
#include "sldais/trainer.hpp"

namespace sldais::checks {

namespace {

using ad::var;

Eigen::VectorXd uniform(std::size_t n, double lo, double hi, rng_engine& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

struct op_case {
  std::string name;
  std::vector<std::size_t> sizes;
  std::function<Eigen::VectorXd(rng_engine&)> draw;
  std::function<var(ad::tape&, std::vector<var>&)> build;
};

std::vector<op_case> op_cases() {
  constexpr std::size_t n = 4;
  const auto plain = [](std::size_t total) {
    return [total](rng_engine& r) { return uniform(total, -3.0, 3.0, r); };
  };
  const auto positive = [](std::size_t total) {
    return [total](rng_engine& r) { return uniform(total, 0.1, 3.0, r); };
  };
  auto mat = std::make_shared<const Eigen::MatrixXd>(
      (Eigen::MatrixXd(3, n) << 0.5, -1.0, 2.0, 0.3, 1.5, 0.2, -0.7, 1.1,
       -0.4, 0.9, 0.6, -1.3)
          .finished());
  std::vector<op_case> c;
  c.push_back({"add", {n, n}, plain(2 * n),
               [](ad::tape&, std::vector<var>& x) { return x[0] + x[1]; }});
  c.push_back({"sub", {n, n}, plain(2 * n),
               [](ad::tape&, std::vector<var>& x) { return x[0] - x[1]; }});
  c.push_back({"mul", {n, n}, plain(2 * n),
               [](ad::tape&, std::vector<var>& x) { return x[0] * x[1]; }});
  c.push_back({"div", {n, n},
               [](rng_engine& r) {
                 Eigen::VectorXd v = uniform(2 * n, -3.0, 3.0, r);
                 for (std::size_t i = n; i < 2 * n; ++i) {
                   v[i] = (v[i] < 0 ? -1.0 : 1.0) * (0.5 + std::abs(v[i]));
                 }
                 return v;
               },
               [](ad::tape&, std::vector<var>& x) { return x[0] / x[1]; }});
  c.push_back({"neg", {n}, plain(n),
               [](ad::tape&, std::vector<var>& x) { return -x[0]; }});
  c.push_back({"exp", {n}, plain(n),
               [](ad::tape&, std::vector<var>& x) { return ad::exp(x[0]); }});
  c.push_back({"log", {n}, positive(n),
               [](ad::tape&, std::vector<var>& x) { return ad::log(x[0]); }});
  c.push_back({"sqrt", {n}, positive(n),
               [](ad::tape&, std::vector<var>& x) { return ad::sqrt(x[0]); }});
  c.push_back({"square", {n}, plain(n),
               [](ad::tape&, std::vector<var>& x) { return ad::square(x[0]); }});
  c.push_back({"sigmoid", {n}, plain(n),
               [](ad::tape&, std::vector<var>& x) { return ad::sigmoid(x[0]); }});
  c.push_back({"log_sigmoid", {n}, plain(n), [](ad::tape&, std::vector<var>& x) {
                 return ad::log_sigmoid(x[0]);
               }});
  c.push_back({"dot", {n, n}, plain(2 * n), [](ad::tape&, std::vector<var>& x) {
                 return ad::dot(x[0], x[1]);
               }});
  c.push_back({"sum", {n}, plain(n),
               [](ad::tape&, std::vector<var>& x) { return ad::sum(x[0]); }});
  c.push_back({"scale", {1, n}, plain(n + 1), [](ad::tape&, std::vector<var>& x) {
                 return ad::scale(x[0], x[1]);
               }});
  c.push_back({"affine", {n, 3}, plain(n + 3),
               [mat](ad::tape&, std::vector<var>& x) {
                 return ad::affine(mat, x[0], x[1]);
               }});
  c.push_back({"affine_transposed", {3}, plain(3),
               [mat](ad::tape&, std::vector<var>& x) {
                 return ad::matvec(mat, x[0], true);
               }});
  c.push_back({"clip", {n},
               [](rng_engine& r) {
                 Eigen::VectorXd v = uniform(n, -3.0, 3.0, r);
                 for (auto& e : v) {
                   if (std::abs(std::abs(e) - 1.0) < 1e-3) e += 0.01;
                 }
                 return v;
               },
               [](ad::tape&, std::vector<var>& x) {
                 return ad::clip(x[0], -1.0, 1.0);
               }});
  c.push_back({"cumsum", {n}, plain(n),
               [](ad::tape&, std::vector<var>& x) { return ad::cumsum(x[0]); }});
  c.push_back({"gather", {n}, plain(n), [](ad::tape&, std::vector<var>& x) {
                 return ad::gather(x[0], {2, 0, 2, 3});
               }});
  c.push_back({"tril_from_raw", {6}, plain(6), [](ad::tape&, std::vector<var>& x) {
                 return ad::tril_from_raw(x[0]);
               }});
  c.push_back({"tril_matvec", {6, 3}, plain(9), [](ad::tape&, std::vector<var>& x) {
                 return ad::tril_matvec(ad::tril_from_raw(x[0]), x[1]);
               }});
  c.push_back({"tril_solve", {6, 3},
               [](rng_engine& r) {
                 Eigen::VectorXd v = uniform(9, -3.0, 3.0, r);
                 for (int i : {0, 2, 5}) v[i] = std::clamp(v[i], -1.0, 1.0);
                 return v;
               },
               [](ad::tape&, std::vector<var>& x) {
                 return ad::tril_solve(ad::tril_from_raw(x[0]), x[1]);
               }});
  c.push_back({"tril_solve_transposed", {6, 3},
               [](rng_engine& r) {
                 Eigen::VectorXd v = uniform(9, -3.0, 3.0, r);
                 for (int i : {0, 2, 5}) v[i] = std::clamp(v[i], -1.0, 1.0);
                 return v;
               },
               [](ad::tape&, std::vector<var>& x) {
                 return ad::tril_solve_transposed(ad::tril_from_raw(x[0]), x[1]);
               }});
  return c;
}

}  // namespace

Eigen::VectorXd central_difference(const objective& f, const Eigen::VectorXd& x,
                                   double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double e = std::abs(a[i] - b[i]) / (std::abs(b[i]) + floor);
    if (!std::isfinite(e)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, e);
  }
  return worst;
}

geometry_result leapfrog_geometry(std::size_t instances, std::size_t dim,
                                  double eta_max, std::uint64_t seed) {
  rng_engine rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  geometry_result out;
  const auto d = static_cast<Eigen::Index>(dim);
  for (std::size_t trial = 0; trial < instances; ++trial) {
    Eigen::MatrixXd r(d, d);
    for (auto& e : r.reshaped()) e = 2.0 * unit(rng) - 1.0;
    auto a = std::make_shared<const Eigen::MatrixXd>(
        r * r.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d));
    const Eigen::VectorXd z0 = 2.0 * standard_normal(dim, rng);
    const Eigen::VectorXd v0 = 2.0 * standard_normal(dim, rng);
    const double eta = eta_max * (0.01 + 0.99 * unit(rng));
    const Eigen::VectorXd mass = uniform(dim, 0.2, 5.0, rng).eval();

    const auto step = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& v) {
      ad::tape t;
      const score_fn score = [&](var zz) { return -ad::matvec(a, zz); };
      const leapfrog_result res = leapfrog(t.constant(z), t.constant(v),
                                           t.constant(eta), t.constant(mass),
                                           score);
      Eigen::VectorXd s(2 * d);
      s << res.z.value(), res.v_hat.value();
      return s;
    };

    const Eigen::VectorXd fwd = step(z0, v0);
    const Eigen::VectorXd back = step(fwd.head(d), -fwd.tail(d));
    Eigen::VectorXd diff(2 * d);
    diff << back.head(d) - z0, -back.tail(d) - v0;
    out.max_reversibility_error =
        std::max(out.max_reversibility_error, diff.cwiseAbs().maxCoeff());

    Eigen::VectorXd x(2 * d);
    x << z0, v0;
    Eigen::MatrixXd jac(2 * d, 2 * d);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < 2 * d; ++i) {
      Eigen::VectorXd up = x;
      Eigen::VectorXd down = x;
      up[i] += h;
      down[i] -= h;
      jac.col(i) = (step(up.head(d), up.tail(d)) -
                    step(down.head(d), down.tail(d))) /
                   (2.0 * h);
    }
    out.max_volume_error =
        std::max(out.max_volume_error, std::abs(jac.determinant() - 1.0));
  }
  return out;
}

double refresh_identity_error(std::size_t transitions, std::size_t dim,
                              std::uint64_t seed) {
  rng_engine rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < transitions; ++i) {
    ad::tape t;
    const var mass = t.constant(uniform(dim, 0.2, 5.0, rng));
    const var gamma = t.constant(0.999 * unit(rng));
    const var v_hat = ad::sqrt(mass) * t.constant(standard_normal(dim, rng));
    const var v = refresh(v_hat, gamma, mass,
                          t.constant(standard_normal(dim, rng)));
    const double forward = refresh_log_density(v, v_hat, gamma, mass).scalar();
    const double backward = refresh_log_density(v_hat, v, gamma, mass).scalar();
    const double kinetic = kinetic_diff(v, v_hat, mass).scalar();
    worst = std::max(worst, std::abs(forward - backward - kinetic));
  }
  return worst;
}

std::vector<gradient_check> estimator_gradients(std::size_t dim,
                                                std::size_t steps,
                                                std::size_t n_data,
                                                std::uint64_t seed) {
  synthetic_spec spec;
  spec.kind = likelihood_kind::linear;
  spec.n = n_data;
  spec.dim = dim;
  spec.seed = seed;
  spec.sigma_obs = 0.8;
  const dataset data = generate(spec).data;
  rng_engine rng(seed + 1);

  std::vector<gradient_check> out;
  for (method m :
       {method::mf, method::dais, method::ns_dais, method::sl_dais}) {
    run_config c;
    c.method_ = m;
    c.model = likelihood_kind::linear;
    c.sigma_obs = 0.8;
    c.k = steps;
    if (m == method::ns_dais || m == method::sl_dais) c.b = n_data / 2;
    if (m == method::sl_dais) c.n_surr = n_data / 4;
    c.seed = seed;
    const problem p = make_problem(c, data);
    variational_state state = initial_state(c, p);
    Eigen::VectorXd flat = state.flatten();
    flat += 0.2 * standard_normal(static_cast<std::size_t>(flat.size()), rng);
    state.assign(flat);
    if (state.anneal) {
      // Keep the step size inside the clip region.
      state.anneal->eta_tilde = 0.05;
      state.anneal->kappa = 0.03;
      flat = state.flatten();
    }
    const noise_bundle noise = draw_sample_noise(c, p, rng);
    const std::span<const noise_bundle> one(&noise, 1);

    const Eigen::VectorXd grad = evaluate(c, p, state, one, true).gradient;
    const objective f = [&](const Eigen::VectorXd& x) {
      variational_state s = state;
      s.assign(x);
      return evaluate(c, p, s, one, false).value;
    };
    const Eigen::VectorXd fd = central_difference(f, flat);
    out.push_back({to_string(m), max_relative_error(grad, fd),
                   static_cast<std::size_t>(flat.size())});
  }
  return out;
}

std::vector<gradient_check> op_gradients(std::size_t trials,
                                         std::uint64_t seed) {
  rng_engine rng(seed);
  std::vector<gradient_check> out;
  for (const op_case& oc : op_cases()) {
    gradient_check res{oc.name, 0.0, 0};
    for (std::size_t trial = 0; trial < trials; ++trial) {
      const Eigen::VectorXd x = oc.draw(rng);
      Eigen::VectorXd w;
      const auto run = [&](const Eigen::VectorXd& flat, bool grad,
                           Eigen::VectorXd* g) {
        ad::tape t;
        std::vector<var> in;
        Eigen::Index at = 0;
        for (std::size_t s : oc.sizes) {
          const Eigen::VectorXd piece =
              flat.segment(at, static_cast<Eigen::Index>(s));
          in.push_back(grad ? t.variable(piece) : t.constant(piece));
          at += static_cast<Eigen::Index>(s);
        }
        const var y = oc.build(t, in);
        if (w.size() != y.size()) {
          w = uniform(static_cast<std::size_t>(y.size()), 0.5, 1.5, rng);
        }
        const var total = ad::dot(t.constant(w), y);
        if (g) {
          const auto grads = t.gradient(total, in);
          g->resize(flat.size());
          Eigen::Index pos = 0;
          for (const auto& gi : grads) {
            g->segment(pos, gi.size()) = gi;
            pos += gi.size();
          }
        }
        return total.scalar();
      };
      Eigen::VectorXd g;
      run(x, true, &g);
      const Eigen::VectorXd fd = central_difference(
          [&](const Eigen::VectorXd& p) { return run(p, false, nullptr); }, x,
          1e-6);
      res.max_relative_error =
          std::max(res.max_relative_error, max_relative_error(g, fd));
      res.parameters = static_cast<std::size_t>(x.size());
    }
    out.push_back(res);
  }
  return out;
}

std::vector<check_outcome> invariant_suite(std::uint64_t seed) {
  std::vector<check_outcome> out;
  const auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };

  for (const auto& g : op_gradients(100, seed)) {
    add("ad gradient: " + g.name, g.max_relative_error <= 1e-5,
        "max relative error " + fmt(g.max_relative_error));
  }

  const geometry_result geo = leapfrog_geometry(200, 3, 0.25, seed + 1);
  add("leapfrog reversibility", geo.max_reversibility_error <= 1e-9,
      "max error " + fmt(geo.max_reversibility_error));
  add("leapfrog volume preservation", geo.max_volume_error <= 1e-6,
      "max |det J - 1| " + fmt(geo.max_volume_error));

  const double refresh_err = refresh_identity_error(1000, 3, seed + 2);
  add("refresh density ratio equals kinetic difference", refresh_err <= 1e-10,
      "max error " + fmt(refresh_err));

  for (const auto& g : estimator_gradients(2, 3, 16, seed + 3)) {
    add("estimator gradient: " + g.name, g.max_relative_error <= 1e-4,
        "max relative error " + fmt(g.max_relative_error) + " over " +
            std::to_string(g.parameters) + " parameters");
  }

  {
    synthetic_spec spec;
    spec.n = 6;
    spec.dim = 2;
    spec.seed = seed + 4;
    const dataset data = generate(spec).data;
    oracle::gaussian_moments prior{Eigen::VectorXd::Zero(2),
                                   Eigen::MatrixXd::Identity(2, 2)};
    const double a = oracle::log_evidence(prior, &data, 1.0);
    const double b = oracle::log_evidence_direct(prior, data, 1.0);
    add("evidence: Bayes identity matches marginal likelihood",
        std::abs(a - b) <= 1e-10, "difference " + fmt(std::abs(a - b)));

    const auto agg = oracle::aggregate_pseudo_posterior(prior, data, 1.0, 6);
    const auto post = oracle::exact_posterior(prior, &data, 1.0);
    const double err = std::max(
        (agg.mean - post.mean).cwiseAbs().maxCoeff(),
        (agg.covariance - post.covariance()).cwiseAbs().maxCoeff());
    add("aggregate pseudo-posterior with B = N is the posterior", err <= 1e-12,
        "max difference " + fmt(err));
  }

  {
    // K = 0 reduces every annealed estimator to the plain ELBO.
    synthetic_spec spec;
    spec.n = 8;
    spec.dim = 2;
    spec.seed = seed + 5;
    const dataset data = generate(spec).data;
    double worst = 0.0;
    for (method m : {method::dais, method::ns_dais, method::sl_dais}) {
      run_config c;
      c.method_ = m;
      c.model = likelihood_kind::linear;
      c.k = 0;
      c.b = 8;
      if (m == method::sl_dais) c.n_surr = 4;
      run_config plain = c;
      plain.method_ = method::mf;
      plain.n_surr.reset();
      const problem p = make_problem(c, data);
      const variational_state s = initial_state(c, p);
      variational_state sp = initial_state(plain, p);
      sp.q0 = s.q0;
      rng_engine rng(seed + 6);
      for (int i = 0; i < 20; ++i) {
        const noise_bundle n = draw_sample_noise(c, p, rng);
        const std::span<const noise_bundle> one(&n, 1);
        worst = std::max(worst, std::abs(evaluate(c, p, s, one, false).value -
                                         evaluate(plain, p, sp, one, false).value));
      }
    }
    add("K = 0 annealed estimators equal the plain ELBO", worst == 0.0,
        "max difference " + fmt(worst));
  }
  return out;
}

}  // namespace sldais::checks
