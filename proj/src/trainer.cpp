#include "sldais/trainer.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "sldais/oracle.hpp"

namespace sldais {

namespace {

constexpr std::uint64_t eval_stream_salt = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t surrogate_stream_salt = 0xD1B54A32D192ED03ull;
constexpr std::size_t divergence_window = 1000;

std::vector<Eigen::Index> block(std::size_t offset, std::size_t length) {
  std::vector<Eigen::Index> idx(length);
  for (std::size_t i = 0; i < length; ++i) {
    idx[i] = static_cast<Eigen::Index>(offset + i);
  }
  return idx;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

std::size_t anneal_count(const variational_state& s) {
  return s.anneal ? s.anneal->parameter_count() : 0;
}

std::size_t surrogate_count(const variational_state& s) {
  return s.surrogate ? s.surrogate->size() : 0;
}

}  // namespace

problem make_problem(const run_config& config) {
  if (config.data_path.empty()) throw config_error("config has no data path");
  return make_problem(config, load_csv(config.data_path));
}

problem make_problem(const run_config& config, dataset data) {
  if (config.standardize) data = standardize(data);
  config.validate_against(data.size());
  const prior_spec prior = prior_from_json(config.prior, data.dim());
  problem p{std::move(data), {}};
  try {
    p.model = config.model == likelihood_kind::linear
                  ? model_density::linear(prior.mean, prior.precision,
                                          config.sigma_obs)
                  : model_density::logistic(prior.mean, prior.precision);
    p.model.check_compatible(p.data);
  } catch (const data_error& e) {
    throw config_error(e.what());
  }
  return p;
}

std::size_t variational_state::parameter_count() const {
  return q0.parameter_count() + anneal_count(*this) + surrogate_count(*this) +
         (log_sigma_obs ? 1 : 0);
}

Eigen::VectorXd variational_state::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  const auto put = [&](const Eigen::VectorXd& v) {
    flat.segment(at, v.size()) = v;
    at += v.size();
  };
  put(q0.flatten());
  if (anneal) put(anneal->flatten());
  if (surrogate) put(surrogate->raw_log_weights);
  if (log_sigma_obs) flat[at++] = *log_sigma_obs;
  return flat;
}

void variational_state::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ad::usage_error("parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  const auto take = [&](std::size_t n) {
    const Eigen::VectorXd v = flat.segment(at, static_cast<Eigen::Index>(n));
    at += static_cast<Eigen::Index>(n);
    return v;
  };
  q0.assign(take(q0.parameter_count()));
  if (anneal) anneal->assign(take(anneal->parameter_count()));
  if (surrogate) surrogate->raw_log_weights = take(surrogate->size());
  if (log_sigma_obs) *log_sigma_obs = flat[at];
}

variational_state initial_state(const run_config& config, const problem& p) {
  variational_state s;
  const std::size_t dim = p.model.dim();
  const base_kind kind = config.base_distribution_kind();
  if (config.init == q0_init::prior) {
    s.q0 = base_distribution::from_gaussian(
        kind, p.model.prior_mean,
        oracle::prior_of(p.model).covariance());
  } else {
    s.q0 = base_distribution::standard(kind, dim);
  }
  if (config.effective_steps() > 0) {
    annealing_state a =
        annealing_state::initial(config.k, dim, config.eta_init);
    a.eta_max = config.eta_max;
    a.fixed_gamma = config.fixed_gamma;
    s.anneal = std::move(a);
  }
  if (config.method_ == method::sl_dais) {
    s.surrogate = surrogate_likelihood::init_rand(
        p.data, *config.n_surr, config.seed ^ surrogate_stream_salt);
  }
  if (p.model.kind == likelihood_kind::linear) {
    s.log_sigma_obs = std::log(config.sigma_obs);
  }

  if (!config.init_checkpoint.empty()) {
    std::ifstream in(config.init_checkpoint);
    if (!in) {
      throw config_error("cannot open init checkpoint '" +
                         config.init_checkpoint + "'");
    }
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw config_error("init checkpoint: " + std::string(e.what()));
    }
    const checkpoint c = load_checkpoint(j, p.data);
    if (c.state.q0.kind == s.q0.kind && c.state.q0.dim() == dim) {
      s.q0 = c.state.q0;
    } else if (c.state.q0.dim() == dim) {
      s.q0 = base_distribution::from_gaussian(kind, c.state.q0.loc,
                                              c.state.q0.covariance());
    }
    if (s.anneal && c.state.anneal && c.state.anneal->steps == s.anneal->steps) {
      const auto eta_max = s.anneal->eta_max;
      const auto fixed = s.anneal->fixed_gamma;
      s.anneal = c.state.anneal;
      s.anneal->eta_max = eta_max;
      s.anneal->fixed_gamma = fixed;
    }
    if (s.surrogate && c.state.surrogate &&
        c.state.surrogate->size() == s.surrogate->size()) {
      s.surrogate = c.state.surrogate;
    }
    if (s.log_sigma_obs && c.state.log_sigma_obs) {
      s.log_sigma_obs = c.state.log_sigma_obs;
    }
  }
  return s;
}

Eigen::Array<bool, Eigen::Dynamic, 1> trainable_mask(
    const run_config& config, const variational_state& state) {
  Eigen::Array<bool, Eigen::Dynamic, 1> mask(
      static_cast<Eigen::Index>(state.parameter_count()));
  mask.setConstant(false);
  Eigen::Index at = 0;
  const auto set = [&](std::size_t n, bool on) {
    mask.segment(at, static_cast<Eigen::Index>(n)).setConstant(on);
    at += static_cast<Eigen::Index>(n);
  };
  set(state.q0.parameter_count(), config.learn_q0);
  if (state.anneal) {
    set(state.anneal->steps, config.learn_beta);
    set(1, config.learn_step_size);
    set(1, config.learn_step_size && config.learn_kappa);
    set(1, config.learn_gamma && !state.anneal->fixed_gamma);
    set(state.anneal->dim(), config.learn_mass);
  }
  if (state.surrogate) set(state.surrogate->size(), config.learn_surrogate);
  if (state.log_sigma_obs) set(1, config.learn_model);
  return mask;
}

estimator_kind estimator_for(method m) {
  switch (m) {
    case method::mf:
    case method::mvn: return estimator_kind::parametric;
    case method::dais: return estimator_kind::dais;
    case method::ns_dais: return estimator_kind::ns_dais;
    case method::sl_dais: return estimator_kind::sl_dais;
  }
  throw ad::usage_error("unknown method");
}

noise_bundle draw_sample_noise(const run_config& config, const problem& p,
                               rng_engine& rng) {
  return draw_noise(rng, p.model.dim(), config.effective_steps(),
                    p.data.size(), config.effective_batch(p.data.size()),
                    config.ns_prime);
}

evaluation evaluate(const run_config& config, const problem& p,
                    const variational_state& state,
                    std::span<const noise_bundle> noise, bool with_gradient) {
  if (noise.empty()) throw ad::usage_error("evaluate needs at least one sample");
  ad::tape t;
  evaluation out;
  try {
    const Eigen::VectorXd flat = state.flatten();
    const ad::var params = with_gradient ? t.variable(flat) : t.constant(flat);
    std::size_t at = 0;
    const auto chunk = [&](std::size_t n) {
      const ad::var v = ad::gather(params, block(at, n));
      at += n;
      return v;
    };
    const base_terms q0(t, state.q0.kind, state.q0.dim(),
                        chunk(state.q0.parameter_count()));
    std::optional<anneal_terms> anneal;
    if (state.anneal) {
      anneal.emplace(t, *state.anneal, chunk(state.anneal->parameter_count()));
    }
    ad::var raw_weights;
    if (state.surrogate) raw_weights = chunk(state.surrogate->size());
    const model_terms model = state.log_sigma_obs
                                  ? model_terms(t, p.model, chunk(1))
                                  : model_terms(t, p.model);

    estimator_inputs in;
    in.data = &p.data;
    in.model = &model;
    in.q0 = &q0;
    in.anneal = anneal ? &*anneal : nullptr;
    in.surrogate = state.surrogate ? &*state.surrogate : nullptr;
    in.surrogate_raw_log_weights = raw_weights;

    const estimator_kind kind = estimator_for(config.method_);
    ad::var total;
    for (const noise_bundle& n : noise) {
      const elbo_estimate e = estimate(kind, in, n);
      total = total.valid() ? total + e.value : e.value;
      out.z_final.push_back(e.z_final.value());
    }
    if (noise.size() > 1) total = total * (1.0 / static_cast<double>(noise.size()));
    out.value = total.scalar();
    if (with_gradient) {
      const ad::var wrt[] = {params};
      out.gradient = t.gradient(total, wrt).front();
    }
  } catch (const ad::numeric_domain_error& e) {
    throw divergence_error(0, e.what());
  }
  return out;
}

std::uint64_t evaluation_seed(std::uint64_t seed) {
  return seed ^ eval_stream_salt;
}

final_report evaluate_elbo(const run_config& config, const problem& p,
                           const variational_state& state, std::size_t samples,
                           std::uint64_t seed) {
  final_report r;
  r.method_name = to_string(config.method_);
  rng_engine rng(seed);
  const std::vector<std::size_t> everyone = all_indices(p.data.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    noise_bundle n = draw_sample_noise(config, p, rng);
    n.final_batch = everyone;
    try {
      const double v =
          evaluate(config, p, state, std::span<const noise_bundle>(&n, 1), false)
              .value;
      sum += v;
      sum_sq += v * v;
      ++ok;
    } catch (const divergence_error&) {
      ++r.eval_divergences;
    }
  }
  r.eval_samples = ok;
  if (ok > 0) {
    const double m = static_cast<double>(ok);
    r.elbo_mean = sum / m;
    const double var =
        ok > 1 ? std::max(0.0, (sum_sq - m * r.elbo_mean * r.elbo_mean) / (m - 1.0))
               : 0.0;
    r.elbo_se = std::sqrt(var / m);
  } else {
    r.elbo_mean = std::nan("");
    r.elbo_se = std::nan("");
  }
  if (p.model.kind == likelihood_kind::linear) {
    const double sigma =
        state.log_sigma_obs ? std::exp(*state.log_sigma_obs) : p.model.sigma_obs;
    r.log_evidence =
        oracle::log_evidence(oracle::prior_of(p.model), &p.data, sigma);
    r.gap = *r.log_evidence - r.elbo_mean;
  }
  return r;
}

fit_result run_fit(const run_config& config, const problem& p,
                   const fit_options& options) {
  return run_fit(config, p, initial_state(config, p), options);
}

fit_result run_fit(const run_config& config, const problem& p,
                   variational_state init, const fit_options& options) {
  config.validate_against(p.data.size());
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
  };

  fit_result out{std::move(init), adam_state(0), {}};
  variational_state& state = out.state;
  Eigen::VectorXd flat = state.flatten();
  const auto mask = trainable_mask(config, state);
  out.adam = adam_state(static_cast<std::size_t>(flat.size()));

  lr_schedule schedule = config.lr;
  schedule.total_steps = config.steps;
  rng_engine rng(config.seed);
  const std::size_t window = std::min(divergence_window, config.steps);
  std::deque<bool> recent;
  std::size_t recent_bad = 0;
  std::size_t divergences = 0;
  std::string last_problem;

  std::vector<noise_bundle> noise(config.samples_per_step);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const double lr = lr_at(schedule, step);
    for (auto& n : noise) n = draw_sample_noise(config, p, rng);

    metrics_record rec;
    rec.step = step;
    rec.lr = lr;
    if (state.anneal) {
      rec.eta_tilde = state.anneal->eta_tilde;
      rec.kappa = state.anneal->kappa;
      rec.gamma = gamma_of(*state.anneal);
    }

    bool bad = false;
    try {
      const evaluation ev = evaluate(config, p, state, noise, true);
      if (adam_step(out.adam, flat, ev.gradient, lr, true, &mask)) {
        state.assign(flat);
        rec.elbo_sample = ev.value;
      } else {
        bad = true;
        last_problem = "non-finite gradient";
      }
    } catch (const divergence_error& e) {
      bad = true;
      last_problem = e.what();
    }
    if (bad) ++divergences;
    rec.divergences = divergences;

    recent.push_back(bad);
    recent_bad += bad ? 1 : 0;
    if (recent.size() > window) {
      recent_bad -= recent.front() ? 1 : 0;
      recent.pop_front();
    }
    if (recent.size() == window && 2 * recent_bad > window) {
      std::ostringstream msg;
      msg << "training aborted at step " << step << ": " << recent_bad
          << " of the last " << window << " steps diverged (last: "
          << last_problem << "); eta_tilde="
          << (state.anneal ? state.anneal->eta_tilde : 0.0)
          << ". Lower options.eta_init, options.eta_max or the learning rate.";
      throw training_aborted(msg.str());
    }

    rec.wall_ms = config.emit_wall_time ? elapsed_ms() : 0.0;
    if (options.metrics &&
        (step % config.metrics_every == 0 || step + 1 == config.steps)) {
      emit_metrics(*options.metrics, rec);
    }
    if (options.on_step) options.on_step(step, state);
  }

  const std::size_t samples = options.eval_samples.value_or(config.eval_samples);
  out.report = evaluate_elbo(config, p, state, samples,
                             evaluation_seed(config.seed));
  out.report.steps = config.steps;
  out.report.divergences = divergences;
  out.report.wall_ms = elapsed_ms();
  return out;
}

nlohmann::json to_json(const final_report& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method_name;
  j["steps"] = r.steps;
  j["divergences"] = r.divergences;
  j["elbo_mean"] = r.elbo_mean;
  j["elbo_se"] = r.elbo_se;
  j["eval_samples"] = r.eval_samples;
  j["eval_divergences"] = r.eval_divergences;
  j["log_evidence"] = r.log_evidence ? nlohmann::ordered_json(*r.log_evidence)
                                     : nlohmann::ordered_json(nullptr);
  j["gap"] = r.gap ? nlohmann::ordered_json(*r.gap)
                   : nlohmann::ordered_json(nullptr);
  j["wall_ms"] = r.wall_ms;
  return nlohmann::json(j);
}

nlohmann::json annealing_to_json(const annealing_state& a) {
  nlohmann::json j;
  j["K"] = a.steps;
  j["raw_beta"] = to_std(a.raw_beta);
  j["eta_tilde"] = a.eta_tilde;
  j["kappa"] = a.kappa;
  j["eta_max"] = a.eta_max;
  j["raw_gamma"] = a.raw_gamma;
  j["raw_mass"] = to_std(a.raw_mass);
  j["fixed_gamma"] = a.fixed_gamma ? nlohmann::json(*a.fixed_gamma)
                                   : nlohmann::json(nullptr);
  return j;
}

annealing_state annealing_from_json(const nlohmann::json& j) {
  annealing_state a;
  a.raw_beta = to_eigen(j.at("raw_beta").get<std::vector<double>>());
  a.steps = static_cast<std::size_t>(a.raw_beta.size());
  if (j.contains("K") && j.at("K").get<std::size_t>() != a.steps) {
    throw config_error("checkpoint anneal K does not match raw_beta");
  }
  a.eta_tilde = j.at("eta_tilde").get<double>();
  a.kappa = j.at("kappa").get<double>();
  a.eta_max = j.value("eta_max", default_eta_max);
  a.raw_gamma = j.at("raw_gamma").get<double>();
  a.raw_mass = to_eigen(j.at("raw_mass").get<std::vector<double>>());
  if (j.contains("fixed_gamma") && !j.at("fixed_gamma").is_null()) {
    a.fixed_gamma = j.at("fixed_gamma").get<double>();
  }
  return a;
}

nlohmann::json checkpoint_json(const run_config& config,
                               const variational_state& state,
                               const adam_state* adam) {
  nlohmann::json j;
  j["seed"] = config.seed;
  j["config"] = to_json(config);
  j["parameter_order"] = {"q0", "anneal", "surrogate", "log_sigma_obs"};
  j["q0"] = to_json(state.q0);
  j["anneal"] = state.anneal ? annealing_to_json(*state.anneal)
                             : nlohmann::json(nullptr);
  j["surrogate"] = state.surrogate ? to_json(*state.surrogate)
                                   : nlohmann::json(nullptr);
  j["log_sigma_obs"] = state.log_sigma_obs
                           ? nlohmann::json(*state.log_sigma_obs)
                           : nlohmann::json(nullptr);
  if (adam) {
    j["adam"] = {{"t", adam->t}, {"m", to_std(adam->m)}, {"v", to_std(adam->v)}};
  }
  return j;
}

checkpoint load_checkpoint(const nlohmann::json& j, const dataset& data) {
  checkpoint c;
  try {
    c.config = config_from_json(j.at("config"));
    c.config.seed = j.value("seed", c.config.seed);
    c.state.q0 = base_distribution_from_json(j.at("q0"));
    if (j.contains("anneal") && !j.at("anneal").is_null()) {
      c.state.anneal = annealing_from_json(j.at("anneal"));
    }
    if (j.contains("surrogate") && !j.at("surrogate").is_null()) {
      const auto& s = j.at("surrogate");
      c.state.surrogate = surrogate_likelihood::from_indices(
          data, s.at("indices").get<std::vector<std::size_t>>(),
          to_eigen(s.at("raw_log_weights").get<std::vector<double>>()));
    }
    if (j.contains("log_sigma_obs") && !j.at("log_sigma_obs").is_null()) {
      c.state.log_sigma_obs = j.at("log_sigma_obs").get<double>();
    }
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      adam_state st;
      st.t = a.at("t").get<std::size_t>();
      st.m = to_eigen(a.at("m").get<std::vector<double>>());
      st.v = to_eigen(a.at("v").get<std::vector<double>>());
      c.adam = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("checkpoint: ") + e.what());
  } catch (const std::logic_error& e) {
    throw config_error(std::string("checkpoint: ") + e.what());
  }
  return c;
}

}  // namespace sldais
