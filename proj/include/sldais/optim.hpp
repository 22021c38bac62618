#pragma once

#include <cstddef>
#include <optional>

#include <Eigen/Dense>

namespace sldais {

struct adam_state {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit adam_state(std::size_t n = 0)
      : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
};

// Bias-corrected Adam update on `params`. With `maximize` the objective is
// negated first, so the update ascends it. Entries where `mask` is false are
// left untouched. Returns false (and changes nothing) when the gradient has
// non-finite entries.
bool adam_step(adam_state& state, Eigen::VectorXd& params,
               const Eigen::VectorXd& grad, double lr, bool maximize = false,
               const Eigen::Array<bool, Eigen::Dynamic, 1>* mask = nullptr);

// Piecewise-constant learning rate: `initial` until `first_drop`, `mid`
// until `second_drop`, `late` afterwards.
struct lr_schedule {
  double initial = 1e-3;
  double mid = 1e-4;
  double late = 1e-5;
  // Defaults: 1e5 and 2e5 for runs of at least 3e5 steps, otherwise one and
  // two thirds of the run.
  std::optional<std::size_t> first_drop;
  std::optional<std::size_t> second_drop;
  std::size_t total_steps = 300000;
};

double lr_at(const lr_schedule& schedule, std::size_t step);

}  // namespace sldais
