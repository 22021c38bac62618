#include "sldais/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sldais {

bool adam_step(adam_state& state, Eigen::VectorXd& params,
               const Eigen::VectorXd& grad, double lr, bool maximize,
               const Eigen::Array<bool, Eigen::Dynamic, 1>* mask) {
  if (grad.size() != params.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (mask && mask->size() != params.size()) {
    throw std::invalid_argument("adam_step: mask shape mismatch");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
  if (!grad.allFinite()) return false;

  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const double sign = maximize ? -1.0 : 1.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double g = sign * grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  return true;
}

double lr_at(const lr_schedule& s, std::size_t step) {
  std::size_t first = 100000;
  std::size_t second = 200000;
  if (s.total_steps < 300000) {
    first = s.total_steps / 3;
    second = 2 * s.total_steps / 3;
  }
  if (s.first_drop) first = *s.first_drop;
  if (s.second_drop) second = *s.second_drop;
  if (step < first) return s.initial;
  if (step < second) return s.mid;
  return s.late;
}

}  // namespace sldais
