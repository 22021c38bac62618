#include "sldais/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "sldais/autodiff.hpp"

namespace sldais {

std::vector<std::size_t> sample_minibatch(std::size_t n, std::size_t b,
                                          rng_engine& rng) {
  if (b < 1 || b > n) {
    throw ad::usage_error("batch size " + std::to_string(b) +
                          " must lie in [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(b);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Eigen::VectorXd standard_normal(std::size_t dim, rng_engine& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

}  // namespace sldais
