#pragma once

// Numerical checks shared by the `check` subcommand and the test suites.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sldais/config.hpp"

namespace sldais::checks {

using objective = std::function<double(const Eigen::VectorXd&)>;

// Central differences with step h * max(1, |x_i|).
Eigen::VectorXd central_difference(const objective& f, const Eigen::VectorXd& x,
                                   double h = 1e-5);

// max_i |a_i - b_i| / (|b_i| + floor)
double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          double floor = 1e-12);

struct geometry_result {
  double max_reversibility_error = 0.0;
  double max_volume_error = 0.0;
};

// Random quadratic potentials, states, step sizes in (0, eta_max] and
// diagonal masses. Reversibility: flip momentum, step, flip again.
// Volume: |det J - 1| of the (z, v) -> (z', v^) map by central differences.
geometry_result leapfrog_geometry(std::size_t instances, std::size_t dim,
                                  double eta_max, std::uint64_t seed);

// Largest |log F - log B - kinetic difference| over random refresh
// transitions, with F the forward refresh density and B its reverse.
double refresh_identity_error(std::size_t transitions, std::size_t dim,
                              std::uint64_t seed);

struct gradient_check {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

// Full reparameterized gradient of each estimator (mf, dais, ns-dais,
// sl-dais) on a random linear-regression problem against central
// differences of the same estimator at fixed noise.
std::vector<gradient_check> estimator_gradients(std::size_t dim,
                                                std::size_t steps,
                                                std::size_t n_data,
                                                std::uint64_t seed);

// Largest relative error of every elementwise / reduction op against
// central differences over `trials` random inputs.
std::vector<gradient_check> op_gradients(std::size_t trials,
                                         std::uint64_t seed);

struct check_outcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<check_outcome> invariant_suite(std::uint64_t seed);

}  // namespace sldais::checks
