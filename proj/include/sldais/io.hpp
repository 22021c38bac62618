#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include "sldais/model.hpp"

namespace sldais {

// Carries the 1-based line number of the offending row (0 for file-level
// problems).
class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& path, std::size_t line,
              const std::string& detail);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Header row required; the column named "y" is the response and every other
// column is a covariate, kept in header order.
dataset load_csv(const std::string& path);
dataset parse_csv(std::istream& in, const std::string& name = "<stream>");
void write_csv(std::ostream& out, const dataset& data);

// Column-wise z-scoring of the covariates (constant columns are centred
// only).
dataset standardize(const dataset& data);

struct metrics_record {
  std::size_t step = 0;
  std::optional<double> elbo_sample;  // null when the step diverged
  double lr = 0.0;
  double eta_tilde = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  std::size_t divergences = 0;
  double wall_ms = 0.0;
};

// One JSON object per line. Doubles are written with round-trip precision.
void emit_metrics(std::ostream& out, const metrics_record& r);

}  // namespace sldais
