#include "sldais/config.hpp"

#include <set>

namespace sldais {

namespace {

const std::set<std::string> top_level_keys = {
    "method", "K",     "B",         "N_surr", "seed",  "steps",
    "lr",     "data",  "prior",     "model",  "sigma_obs", "flags",
    "options", "lr_breakpoints"};
const std::set<std::string> flag_keys = {"learn_mass", "ns_prime",
                                         "standardize", "learn_model"};
const std::set<std::string> option_keys = {
    "base",          "eta_init",        "eta_max",      "samples_per_step",
    "eval_samples",  "metrics_every",   "learn_q0",     "learn_beta",
    "learn_step_size", "learn_kappa", "learn_gamma",   "learn_surrogate", "fixed_gamma",
    "q0_init",       "init_checkpoint", "wall_time"};

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& keys,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!keys.count(it.key())) {
      throw config_error("unknown " + where + " field '" + it.key() + "'");
    }
  }
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("field '") + key + "': " + e.what());
  }
}

Eigen::VectorXd vector_field(const nlohmann::json& v, std::size_t dim,
                             const char* what) {
  if (v.is_number()) {
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim),
                                     v.get<double>());
  }
  const auto values = v.get<std::vector<double>>();
  if (values.size() != dim) {
    throw config_error(std::string("prior ") + what + " has length " +
                       std::to_string(values.size()) + ", expected " +
                       std::to_string(dim));
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(dim));
}

}  // namespace

const char* to_string(method m) {
  switch (m) {
    case method::mf: return "mf";
    case method::mvn: return "mvn";
    case method::dais: return "dais";
    case method::ns_dais: return "ns-dais";
    case method::sl_dais: return "sl-dais";
  }
  return "unknown";
}

method method_from_string(const std::string& name) {
  if (name == "mf") return method::mf;
  if (name == "mvn") return method::mvn;
  if (name == "dais") return method::dais;
  if (name == "ns-dais") return method::ns_dais;
  if (name == "sl-dais") return method::sl_dais;
  throw config_error("unknown method '" + name +
                     "' (expected mf, mvn, dais, ns-dais or sl-dais)");
}

bool is_annealed(method m) {
  return m == method::dais || m == method::ns_dais || m == method::sl_dais;
}

prior_spec prior_from_json(const nlohmann::json& j, std::size_t dim) {
  prior_spec p;
  try {
    p.mean = vector_field(j.value("mean", nlohmann::json(0.0)), dim, "mean");
    const nlohmann::json prec = j.value("precision", nlohmann::json(1.0));
    if (prec.is_array() && !prec.empty() && prec.front().is_array()) {
      const auto rows = prec.get<std::vector<std::vector<double>>>();
      if (rows.size() != dim) throw config_error("prior precision row count");
      p.precision.resize(static_cast<Eigen::Index>(dim),
                         static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < dim; ++i) {
        if (rows[i].size() != dim) {
          throw config_error("prior precision must be square");
        }
        for (std::size_t c = 0; c < dim; ++c) {
          p.precision(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(c)) = rows[i][c];
        }
      }
    } else {
      p.precision = vector_field(prec, dim, "precision").asDiagonal();
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("prior: ") + e.what());
  }
  return p;
}

base_kind run_config::base_distribution_kind() const {
  if (method_ == method::mf) return base_kind::mean_field;
  if (method_ == method::mvn) return base_kind::full_rank;
  return base.value_or(base_kind::mean_field);
}

std::size_t run_config::effective_batch(std::size_t n_data) const {
  if (method_ == method::dais) return n_data;
  return b.value_or(n_data);
}

std::size_t run_config::effective_steps() const {
  return is_annealed(method_) ? k : 0;
}

void run_config::validate() const {
  if (steps < 1) throw config_error("steps must be >= 1");
  if (method_ == method::sl_dais && !n_surr) {
    throw config_error("N_surr is required for sl-dais");
  }
  if (method_ != method::sl_dais && n_surr) {
    throw config_error("N_surr is only valid for sl-dais");
  }
  if ((method_ == method::ns_dais || method_ == method::sl_dais) && !b) {
    throw config_error("B is required for " + std::string(to_string(method_)));
  }
  if (b && *b < 1) throw config_error("B must be >= 1");
  if (samples_per_step < 1) throw config_error("samples_per_step must be >= 1");
  if (metrics_every < 1) throw config_error("metrics_every must be >= 1");
  if (!(eta_max > 0.0)) throw config_error("eta_max must be positive");
  if (!(sigma_obs > 0.0)) throw config_error("sigma_obs must be positive");
  if (fixed_gamma && !(*fixed_gamma >= 0.0 && *fixed_gamma < 1.0)) {
    throw config_error("fixed_gamma must lie in [0, 1)");
  }
  if (ns_prime && method_ != method::ns_dais) {
    throw config_error("ns_prime only applies to ns-dais");
  }
}

void run_config::validate_against(std::size_t n_data) const {
  validate();
  if (b && *b > n_data) {
    throw config_error("B = " + std::to_string(*b) + " exceeds N = " +
                       std::to_string(n_data));
  }
  if (n_surr && (*n_surr < 1 || *n_surr > n_data)) {
    throw config_error("N_surr must lie in [1, N]");
  }
}

run_config config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw config_error("config must be a JSON object");
  reject_unknown(j, top_level_keys, "config");
  run_config c;
  if (!j.contains("method")) throw config_error("missing field 'method'");
  c.method_ = method_from_string(j.at("method").get<std::string>());
  c.k = get_or<std::size_t>(j, "K", c.k);
  if (j.contains("B")) c.b = j.at("B").get<std::size_t>();
  if (j.contains("N_surr")) c.n_surr = j.at("N_surr").get<std::size_t>();
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.steps = get_or<std::size_t>(j, "steps", c.steps);
  c.lr.total_steps = c.steps;
  if (j.contains("lr")) {
    const auto lr = j.at("lr").get<std::vector<double>>();
    if (lr.size() != 3) throw config_error("lr must be a triple");
    c.lr.initial = lr[0];
    c.lr.mid = lr[1];
    c.lr.late = lr[2];
  }
  if (j.contains("lr_breakpoints")) {
    const auto bp = j.at("lr_breakpoints").get<std::vector<std::size_t>>();
    if (bp.size() != 2 || bp[0] > bp[1]) {
      throw config_error("lr_breakpoints must be two increasing steps");
    }
    c.lr.first_drop = bp[0];
    c.lr.second_drop = bp[1];
  }
  c.data_path = get_or<std::string>(j, "data", "");
  if (j.contains("prior")) c.prior = j.at("prior");
  if (j.contains("model")) {
    try {
      c.model = likelihood_kind_from_string(j.at("model").get<std::string>());
    } catch (const data_error& e) {
      throw config_error(e.what());
    }
  }
  c.sigma_obs = get_or<double>(j, "sigma_obs", c.sigma_obs);

  if (j.contains("flags")) {
    const auto& f = j.at("flags");
    reject_unknown(f, flag_keys, "flags");
    c.learn_mass = get_or<bool>(f, "learn_mass", c.learn_mass);
    c.ns_prime = get_or<bool>(f, "ns_prime", c.ns_prime);
    c.standardize = get_or<bool>(f, "standardize", c.standardize);
    c.learn_model = get_or<bool>(f, "learn_model", c.learn_model);
  }
  if (j.contains("options")) {
    const auto& o = j.at("options");
    reject_unknown(o, option_keys, "options");
    if (o.contains("base")) {
      try {
        c.base = base_kind_from_string(o.at("base").get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
      }
    }
    c.eta_init = get_or<double>(o, "eta_init", c.eta_init);
    c.eta_max = get_or<double>(o, "eta_max", c.eta_max);
    c.samples_per_step =
        get_or<std::size_t>(o, "samples_per_step", c.samples_per_step);
    c.eval_samples = get_or<std::size_t>(o, "eval_samples", c.eval_samples);
    c.metrics_every = get_or<std::size_t>(o, "metrics_every", c.metrics_every);
    c.learn_q0 = get_or<bool>(o, "learn_q0", c.learn_q0);
    c.learn_beta = get_or<bool>(o, "learn_beta", c.learn_beta);
    c.learn_step_size = get_or<bool>(o, "learn_step_size", c.learn_step_size);
    c.learn_kappa = get_or<bool>(o, "learn_kappa", c.learn_kappa);
    c.learn_gamma = get_or<bool>(o, "learn_gamma", c.learn_gamma);
    c.learn_surrogate = get_or<bool>(o, "learn_surrogate", c.learn_surrogate);
    if (o.contains("fixed_gamma")) c.fixed_gamma = o.at("fixed_gamma").get<double>();
    if (o.contains("q0_init")) {
      const auto init = o.at("q0_init").get<std::string>();
      if (init == "standard") {
        c.init = q0_init::standard;
      } else if (init == "prior") {
        c.init = q0_init::prior;
      } else {
        throw config_error("q0_init must be standard or prior");
      }
    }
    c.init_checkpoint = get_or<std::string>(o, "init_checkpoint", "");
    c.emit_wall_time = get_or<bool>(o, "wall_time", c.emit_wall_time);
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const run_config& c) {
  nlohmann::json j;
  j["method"] = to_string(c.method_);
  j["K"] = c.k;
  if (c.b) j["B"] = *c.b;
  if (c.n_surr) j["N_surr"] = *c.n_surr;
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["lr"] = {c.lr.initial, c.lr.mid, c.lr.late};
  if (c.lr.first_drop && c.lr.second_drop) {
    j["lr_breakpoints"] = {*c.lr.first_drop, *c.lr.second_drop};
  }
  j["data"] = c.data_path;
  j["prior"] = c.prior;
  j["model"] = to_string(c.model);
  j["sigma_obs"] = c.sigma_obs;
  j["flags"] = {{"learn_mass", c.learn_mass},
                {"ns_prime", c.ns_prime},
                {"standardize", c.standardize},
                {"learn_model", c.learn_model}};
  nlohmann::json o;
  if (c.base) o["base"] = to_string(*c.base);
  o["eta_init"] = c.eta_init;
  o["eta_max"] = c.eta_max;
  o["samples_per_step"] = c.samples_per_step;
  o["eval_samples"] = c.eval_samples;
  o["metrics_every"] = c.metrics_every;
  o["learn_q0"] = c.learn_q0;
  o["learn_beta"] = c.learn_beta;
  o["learn_step_size"] = c.learn_step_size;
  o["learn_kappa"] = c.learn_kappa;
  o["learn_gamma"] = c.learn_gamma;
  o["learn_surrogate"] = c.learn_surrogate;
  if (c.fixed_gamma) o["fixed_gamma"] = *c.fixed_gamma;
  o["q0_init"] = c.init == q0_init::prior ? "prior" : "standard";
  if (!c.init_checkpoint.empty()) o["init_checkpoint"] = c.init_checkpoint;
  o["wall_time"] = c.emit_wall_time;
  j["options"] = o;
  return j;
}

}  // namespace sldais
