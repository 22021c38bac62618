#pragma once

// Reverse-mode automatic differentiation over dense real vectors.
//
// A tape records every operation as a node holding its primal value. Scalars
// are length-1 vectors. Binary elementwise operations accept two operands of
// equal length, or one length-1 operand that is broadcast against the other.
// Gradients come from a single reverse sweep that accumulates adjoints into
// per-node slots; the tape itself is never modified by the sweep.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sldais::ad {

using vector = Eigen::VectorXd;
using matrix = Eigen::MatrixXd;

enum class op_kind {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  sqrt,
  square,
  sigmoid,
  log_sigmoid,
  dot,
  sum,
  scale,
  affine,
  clip,
  cumsum,
  gather,
  tril_from_raw,
  tril_matvec,
  tril_solve,
  tril_solve_transposed,
};

const char* to_string(op_kind kind);

// Raised when an operation produces a NaN or infinite value.
class numeric_domain_error : public std::runtime_error {
 public:
  numeric_domain_error(op_kind kind, const std::string& detail);
  op_kind kind() const { return kind_; }

 private:
  op_kind kind_;
};

class usage_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class tape;

class var {
 public:
  var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  class tape& owner() const { return *tape_; }

  const vector& value() const;
  Eigen::Index size() const { return value().size(); }
  // Requires size() == 1.
  double scalar() const;

 private:
  friend class tape;
  var(class tape* t, std::size_t id) : tape_(t), id_(id) {}

  class tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class tape {
 public:
  tape() = default;
  tape(const tape&) = delete;
  tape& operator=(const tape&) = delete;

  var variable(vector value);
  var variable(double value);
  var constant(vector value);
  var constant(double value);

  // Appends a node of the given kind. Checks shapes and finiteness.
  var record(op_kind kind, std::span<const var> inputs);

  // Single reverse sweep from a scalar output.
  std::vector<vector> gradient(var output, std::span<const var> wrt);

  // Re-evaluates every node from the recorded leaves and constants and
  // reports whether each cached primal is reproduced bit for bit.
  bool replay_matches() const;

  std::size_t size() const { return nodes_.size(); }
  op_kind kind_of(std::size_t id) const { return nodes_[id].kind; }
  std::span<const std::size_t> inputs_of(std::size_t id) const;
  // Nodes touched by the most recent gradient() call.
  std::size_t last_sweep_visits() const { return last_sweep_visits_; }

  // Parameterized operations. These carry non-differentiable payloads
  // (matrices, bounds, index lists) and go through the same validation as
  // record().
  var affine(std::shared_ptr<const matrix> a, var x, bool transpose);
  var affine(std::shared_ptr<const matrix> a, var x, var bias, bool transpose);
  var clip(var x, double lo, double hi);
  var gather(var x, std::vector<Eigen::Index> indices);

  const vector& value_of(std::size_t id) const { return nodes_[id].value; }

 private:
  struct node {
    op_kind kind = op_kind::leaf;
    std::size_t n_inputs = 0;
    std::size_t inputs[2] = {0, 0};
    vector value;
    std::shared_ptr<const matrix> mat;
    bool transpose = false;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<Eigen::Index> indices;
  };

  var push(node n);
  template <class Get>
  static vector evaluate_with(const node& n, Get&& get);
  void backprop(const node& n, const vector& adjoint,
                std::vector<vector>& adjoints) const;

  std::vector<node> nodes_;
  std::size_t last_sweep_visits_ = 0;
};

// Elementwise and reduction helpers. All inputs must share a tape.
var operator+(var a, var b);
var operator-(var a, var b);
var operator*(var a, var b);
var operator/(var a, var b);
var operator-(var a);
var operator+(var a, double b);
var operator+(double a, var b);
var operator-(var a, double b);
var operator-(double a, var b);
var operator*(var a, double b);
var operator*(double a, var b);
var operator/(var a, double b);
var operator/(double a, var b);

var exp(var x);
var log(var x);
var sqrt(var x);
var square(var x);
var sigmoid(var x);
var log_sigmoid(var x);
var dot(var a, var b);
var sum(var x);
// Scalar `s` times vector `x`.
var scale(var s, var x);
var cumsum(var x);
var clip(var x, double lo, double hi);
var gather(var x, std::vector<Eigen::Index> indices);
var element(var x, Eigen::Index i);
// A x (or A^T x) with a constant matrix.
var matvec(std::shared_ptr<const matrix> a, var x, bool transpose = false);
// A x + b.
var affine(std::shared_ptr<const matrix> a, var x, var b,
           bool transpose = false);

// Lower-triangular factor of dimension d from a packed row-major vector of
// d(d+1)/2 raw entries; diagonal entries are exponentiated. The result is a
// row-major d*d vector with zeros above the diagonal.
var tril_from_raw(var packed);
// L x, L^{-1} r and L^{-T} r for a row-major d*d lower-triangular L.
var tril_matvec(var l, var x);
var tril_solve(var l, var r);
var tril_solve_transposed(var l, var r);

// Dimension d such that d(d+1)/2 == packed_size; throws if none.
Eigen::Index tril_dim_from_packed(Eigen::Index packed_size);

}  // namespace sldais::ad
