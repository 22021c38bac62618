#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "sldais/checks.hpp"
#include "sldais/config.hpp"
#include "sldais/io.hpp"
#include "sldais/oracle.hpp"
#include "sldais/synthetic.hpp"
#include "sldais/trainer.hpp"

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sldais::config_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw sldais::config_error(path + ": " + e.what());
  }
}

// Relative data paths resolve against the config file's directory.
sldais::run_config read_config(const std::string& path) {
  sldais::run_config c = sldais::config_from_json(read_json(path));
  const auto base = std::filesystem::path(path).parent_path();
  const auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative() &&
        !std::filesystem::exists(p)) {
      p = (base / p).string();
    }
  };
  resolve(c.data_path);
  resolve(c.init_checkpoint);
  return c;
}

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.emplace_back();
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.back().push_back(m(i, j));
  }
  return out;
}

std::vector<double> vec_of(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

int cmd_fit(const std::string& config_path, const std::string& out_path,
            std::string checkpoint_path, const std::string& report_path,
            std::optional<std::size_t> eval_samples) {
  const sldais::run_config config = read_config(config_path);
  const sldais::problem p = sldais::make_problem(config);

  std::ofstream metrics_file;
  std::ostream* metrics = &std::cout;
  if (!out_path.empty()) {
    metrics_file.open(out_path);
    if (!metrics_file) throw sldais::config_error("cannot write '" + out_path + "'");
    metrics = &metrics_file;
  }
  sldais::fit_options options;
  options.metrics = metrics;
  options.eval_samples = eval_samples;
  const sldais::fit_result result = sldais::run_fit(config, p, options);

  if (checkpoint_path.empty()) {
    checkpoint_path =
        std::filesystem::path(config_path).replace_extension("").string() +
        ".checkpoint.json";
  }
  std::ofstream ck(checkpoint_path);
  if (!ck) throw sldais::config_error("cannot write '" + checkpoint_path + "'");
  ck << sldais::checkpoint_json(config, result.state, &result.adam).dump(2)
     << '\n';

  json report = sldais::to_json(result.report);
  report["checkpoint"] = checkpoint_path;
  report["samples_per_step"] = config.samples_per_step;
  if (report_path.empty()) {
    std::cerr << report.dump() << '\n';
  } else {
    std::ofstream r(report_path);
    if (!r) throw sldais::config_error("cannot write '" + report_path + "'");
    r << report.dump(2) << '\n';
  }
  return 0;
}

int cmd_oracle(const std::string& config_path, std::optional<std::size_t> batch) {
  sldais::run_config config = read_config(config_path);
  if (config.model != sldais::likelihood_kind::linear) {
    throw sldais::config_error("the oracle needs a linear model");
  }
  const sldais::problem p = sldais::make_problem(config);
  namespace oc = sldais::oracle;
  const oc::gaussian_moments prior = oc::prior_of(p.model);
  const oc::gaussian_moments post =
      oc::exact_posterior(prior, &p.data, config.sigma_obs);
  const oc::likelihood_quadratic q =
      oc::likelihood_quadratic_of(p.data, config.sigma_obs);

  nlohmann::ordered_json out;
  out["N"] = p.data.size();
  out["D"] = p.model.dim();
  out["sigma_obs"] = config.sigma_obs;
  out["log_evidence"] = oc::log_evidence(prior, &p.data, config.sigma_obs);
  out["posterior"] = {{"mean", vec_of(post.mean)},
                      {"covariance", rows_of(post.covariance())},
                      {"precision", rows_of(post.precision)}};
  out["likelihood_quadratic"] = {{"a", vec_of(q.a)}, {"B", rows_of(q.b)}};
  if (!batch) batch = config.b;
  if (batch) {
    if (oc::capped_binomial(p.data.size(), *batch) > oc::max_enumerated_subsets) {
      out["aggregate_pseudo_posterior"] = nullptr;
    } else {
      const auto agg = oc::aggregate_pseudo_posterior(prior, p.data,
                                                      config.sigma_obs, *batch);
      out["aggregate_pseudo_posterior"] = {
          {"B", *batch},
          {"components", agg.components.size()},
          {"mean", vec_of(agg.mean)},
          {"covariance", rows_of(agg.covariance)}};
    }
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_gen(const std::string& spec_path, const std::string& out_path) {
  const sldais::synthetic_spec spec =
      sldais::synthetic_spec_from_json(read_json(spec_path));
  const sldais::synthetic_data d = sldais::generate(spec);
  std::ofstream out(out_path);
  if (!out) throw sldais::config_error("cannot write '" + out_path + "'");
  sldais::write_csv(out, d.data);
  json info = {{"N", spec.n}, {"D", spec.dim}, {"z_true", vec_of(d.z_true)}};
  std::cout << info.dump() << '\n';
  return 0;
}

int cmd_check(std::uint64_t seed) {
  const auto results = sldais::checks::invariant_suite(seed);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail
              << ")\n";
    ok = ok && r.passed;
  }
  std::cout << (ok ? "all invariants hold\n" : "invariant failures\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annealed importance sampling variational inference"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint_path, report_path;
  std::size_t eval_samples = 0;
  auto* fit = app.add_subcommand("fit", "Train a variational approximation");
  fit->add_option("config", config_path, "Run config (JSON)")->required();
  fit->add_option("--out", out_path, "Metrics JSONL path (default stdout)");
  fit->add_option("--checkpoint", checkpoint_path, "Checkpoint output path");
  fit->add_option("--report", report_path,
                  "Final report path (default stderr)");
  auto* eval_opt =
      fit->add_option("--eval-samples", eval_samples,
                      "Post-training ELBO samples (overrides the config)");

  std::string oracle_config;
  std::size_t oracle_batch = 0;
  auto* oracle = app.add_subcommand("oracle", "Closed-form conjugate quantities");
  oracle->add_option("config", oracle_config, "Run config (JSON)")->required();
  auto* batch_opt = oracle->add_option(
      "--batch", oracle_batch, "Minibatch size for the aggregate pseudo-posterior");

  std::string spec_path, csv_path;
  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset");
  gen->add_option("spec", spec_path, "Generator spec (JSON)")->required();
  gen->add_option("out", csv_path, "Output CSV")->required();

  std::uint64_t seed = 12345;
  auto* check = app.add_subcommand("check", "Run the invariant suite");
  check->add_option("--seed", seed, "Random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      return cmd_fit(config_path, out_path, checkpoint_path, report_path,
                     eval_opt->count() ? std::optional(eval_samples)
                                       : std::nullopt);
    }
    if (*oracle) {
      return cmd_oracle(oracle_config, batch_opt->count()
                                           ? std::optional(oracle_batch)
                                           : std::nullopt);
    }
    if (*gen) return cmd_gen(spec_path, csv_path);
    if (*check) return cmd_check(seed);
  } catch (const sldais::training_aborted& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
