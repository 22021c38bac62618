#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace sldais {

using rng_engine = std::mt19937_64;

// Uniform size-B subset of {0, ..., N-1} without replacement (partial
// Fisher-Yates), returned in ascending order.
std::vector<std::size_t> sample_minibatch(std::size_t n, std::size_t b,
                                          rng_engine& rng);

Eigen::VectorXd standard_normal(std::size_t dim, rng_engine& rng);

}  // namespace sldais
