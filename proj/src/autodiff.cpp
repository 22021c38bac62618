#include "sldais/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <sstream>

namespace sldais::ad {

namespace {

using row_major = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                Eigen::RowMajor>;
using const_tril_map = Eigen::Map<const row_major>;

Eigen::Index square_dim(Eigen::Index size) {
  const auto d = static_cast<Eigen::Index>(
      std::llround(std::sqrt(static_cast<double>(size))));
  if (d * d != size) {
    throw usage_error("triangular operand has non-square size " +
                      std::to_string(size));
  }
  return d;
}

// Broadcast an operand of size 1 or n to size n.
vector broadcast(const vector& v, Eigen::Index n) {
  if (v.size() == n) return v;
  return vector::Constant(n, v[0]);
}

// Reduce an adjoint of size n onto an operand of size `target`.
void accumulate(vector& slot, const vector& contribution,
                Eigen::Index target) {
  if (slot.size() == 0) slot = vector::Zero(target);
  if (contribution.size() == target) {
    slot += contribution;
  } else {
    slot[0] += contribution.sum();
  }
}

double stable_log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_binary_elementwise(op_kind k) {
  return k == op_kind::add || k == op_kind::sub || k == op_kind::mul ||
         k == op_kind::div;
}

std::size_t arity(op_kind k) {
  switch (k) {
    case op_kind::leaf:
    case op_kind::constant:
      return 0;
    case op_kind::add:
    case op_kind::sub:
    case op_kind::mul:
    case op_kind::div:
    case op_kind::dot:
    case op_kind::scale:
    case op_kind::tril_matvec:
    case op_kind::tril_solve:
    case op_kind::tril_solve_transposed:
      return 2;
    case op_kind::affine:
      return 1;  // bias is optional
    default:
      return 1;
  }
}

std::string describe(const vector& v) {
  std::ostringstream os;
  os << "[";
  const Eigen::Index shown = std::min<Eigen::Index>(v.size(), 4);
  for (Eigen::Index i = 0; i < shown; ++i) {
    if (i) os << ", ";
    os << v[i];
  }
  if (v.size() > shown) os << ", ...";
  os << "]";
  return os.str();
}

}  // namespace

const char* to_string(op_kind kind) {
  switch (kind) {
    case op_kind::leaf: return "leaf";
    case op_kind::constant: return "constant";
    case op_kind::add: return "add";
    case op_kind::sub: return "sub";
    case op_kind::mul: return "mul";
    case op_kind::div: return "div";
    case op_kind::neg: return "neg";
    case op_kind::exp: return "exp";
    case op_kind::log: return "log";
    case op_kind::sqrt: return "sqrt";
    case op_kind::square: return "square";
    case op_kind::sigmoid: return "sigmoid";
    case op_kind::log_sigmoid: return "log-sigmoid";
    case op_kind::dot: return "dot";
    case op_kind::sum: return "sum";
    case op_kind::scale: return "scale";
    case op_kind::affine: return "affine";
    case op_kind::clip: return "clip";
    case op_kind::cumsum: return "cumsum";
    case op_kind::gather: return "gather";
    case op_kind::tril_from_raw: return "tril-from-raw";
    case op_kind::tril_matvec: return "tril-matvec";
    case op_kind::tril_solve: return "tril-solve";
    case op_kind::tril_solve_transposed: return "tril-solve-transposed";
  }
  return "unknown";
}

numeric_domain_error::numeric_domain_error(op_kind kind,
                                           const std::string& detail)
    : std::runtime_error(std::string("non-finite result in ") +
                         to_string(kind) + ": " + detail),
      kind_(kind) {}

const vector& var::value() const { return tape_->value_of(id_); }

double var::scalar() const {
  const vector& v = value();
  if (v.size() != 1) {
    throw usage_error("scalar() on a value of size " +
                      std::to_string(v.size()));
  }
  return v[0];
}

Eigen::Index tril_dim_from_packed(Eigen::Index packed_size) {
  Eigen::Index d = 0;
  while (d * (d + 1) / 2 < packed_size) ++d;
  if (d * (d + 1) / 2 != packed_size || d == 0) {
    throw usage_error("packed triangular size " + std::to_string(packed_size) +
                      " is not d(d+1)/2");
  }
  return d;
}

std::span<const std::size_t> tape::inputs_of(std::size_t id) const {
  const node& n = nodes_[id];
  return {n.inputs, n.n_inputs};
}

var tape::variable(vector value) {
  node n;
  n.kind = op_kind::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

var tape::variable(double value) { return variable(vector::Constant(1, value)); }

var tape::constant(vector value) {
  node n;
  n.kind = op_kind::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

var tape::constant(double value) { return constant(vector::Constant(1, value)); }

var tape::push(node n) {
  if (n.kind != op_kind::leaf && n.kind != op_kind::constant) {
    n.value = evaluate_with(n, [this](std::size_t i) -> const vector& {
      return nodes_[i].value;
    });
  }
  if (!n.value.allFinite()) {
    std::string detail = "output " + describe(n.value);
    for (std::size_t i = 0; i < n.n_inputs; ++i) {
      detail += ", input " + std::to_string(i) + " " +
                describe(nodes_[n.inputs[i]].value);
    }
    throw numeric_domain_error(n.kind, detail);
  }
  nodes_.push_back(std::move(n));
  return var(this, nodes_.size() - 1);
}

var tape::record(op_kind kind, std::span<const var> inputs) {
  if (kind == op_kind::leaf || kind == op_kind::constant) {
    throw usage_error("record() cannot create leaves; use variable()");
  }
  if (kind == op_kind::clip || kind == op_kind::gather) {
    throw usage_error(std::string(to_string(kind)) +
                      " carries parameters; use the dedicated overload");
  }
  if (kind == op_kind::affine) {
    throw usage_error("affine carries a matrix; use the dedicated overload");
  }
  if (inputs.size() != arity(kind)) {
    throw usage_error(std::string(to_string(kind)) + " expects " +
                      std::to_string(arity(kind)) + " inputs, got " +
                      std::to_string(inputs.size()));
  }
  node n;
  n.kind = kind;
  n.n_inputs = inputs.size();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].valid() || &inputs[i].owner() != this) {
      throw usage_error(std::string(to_string(kind)) +
                        ": input lives on a different tape");
    }
    n.inputs[i] = inputs[i].id();
  }
  if (is_binary_elementwise(kind)) {
    const auto a = nodes_[n.inputs[0]].value.size();
    const auto b = nodes_[n.inputs[1]].value.size();
    if (a != b && a != 1 && b != 1) {
      throw usage_error(std::string(to_string(kind)) + ": size mismatch " +
                        std::to_string(a) + " vs " + std::to_string(b));
    }
  } else if (kind == op_kind::dot) {
    if (nodes_[n.inputs[0]].value.size() != nodes_[n.inputs[1]].value.size()) {
      throw usage_error("dot: size mismatch");
    }
  } else if (kind == op_kind::scale) {
    if (nodes_[n.inputs[0]].value.size() != 1) {
      throw usage_error("scale: first operand must be scalar");
    }
  } else if (kind == op_kind::tril_matvec || kind == op_kind::tril_solve ||
             kind == op_kind::tril_solve_transposed) {
    const auto d = square_dim(nodes_[n.inputs[0]].value.size());
    if (nodes_[n.inputs[1]].value.size() != d) {
      throw usage_error(std::string(to_string(kind)) + ": size mismatch");
    }
  } else if (kind == op_kind::tril_from_raw) {
    tril_dim_from_packed(nodes_[n.inputs[0]].value.size());
  }
  return push(std::move(n));
}

var tape::affine(std::shared_ptr<const matrix> a, var x, bool transpose) {
  if (!x.valid() || &x.owner() != this) {
    throw usage_error("affine: input lives on a different tape");
  }
  const auto cols = transpose ? a->rows() : a->cols();
  if (x.size() != cols) {
    throw usage_error("affine: matrix has " + std::to_string(cols) +
                      " columns but vector has " + std::to_string(x.size()));
  }
  node n;
  n.kind = op_kind::affine;
  n.n_inputs = 1;
  n.inputs[0] = x.id();
  n.mat = std::move(a);
  n.transpose = transpose;
  return push(std::move(n));
}

var tape::affine(std::shared_ptr<const matrix> a, var x, var bias,
                 bool transpose) {
  if (!bias.valid() || &bias.owner() != this) {
    throw usage_error("affine: bias lives on a different tape");
  }
  const auto rows = transpose ? a->cols() : a->rows();
  if (bias.size() != rows) {
    throw usage_error("affine: bias size mismatch");
  }
  if (!x.valid() || &x.owner() != this) {
    throw usage_error("affine: input lives on a different tape");
  }
  const auto cols = transpose ? a->rows() : a->cols();
  if (x.size() != cols) {
    throw usage_error("affine: matrix/vector size mismatch");
  }
  node n;
  n.kind = op_kind::affine;
  n.n_inputs = 2;
  n.inputs[0] = x.id();
  n.inputs[1] = bias.id();
  n.mat = std::move(a);
  n.transpose = transpose;
  return push(std::move(n));
}

var tape::clip(var x, double lo, double hi) {
  if (!x.valid() || &x.owner() != this) {
    throw usage_error("clip: input lives on a different tape");
  }
  if (!(lo <= hi)) throw usage_error("clip: lo > hi");
  node n;
  n.kind = op_kind::clip;
  n.n_inputs = 1;
  n.inputs[0] = x.id();
  n.lo = lo;
  n.hi = hi;
  return push(std::move(n));
}

var tape::gather(var x, std::vector<Eigen::Index> indices) {
  if (!x.valid() || &x.owner() != this) {
    throw usage_error("gather: input lives on a different tape");
  }
  for (auto i : indices) {
    if (i < 0 || i >= x.size()) {
      throw usage_error("gather: index " + std::to_string(i) +
                        " out of range for size " + std::to_string(x.size()));
    }
  }
  node n;
  n.kind = op_kind::gather;
  n.n_inputs = 1;
  n.inputs[0] = x.id();
  n.indices = std::move(indices);
  return push(std::move(n));
}

template <class Get>
vector tape::evaluate_with(const node& n, Get&& get) {
  const auto in = [&](std::size_t i) -> const vector& {
    return get(n.inputs[i]);
  };
  switch (n.kind) {
    case op_kind::leaf:
    case op_kind::constant:
      return n.value;
    case op_kind::add:
    case op_kind::sub:
    case op_kind::mul:
    case op_kind::div: {
      const auto size = std::max(in(0).size(), in(1).size());
      const vector a = broadcast(in(0), size);
      const vector b = broadcast(in(1), size);
      if (n.kind == op_kind::add) return a + b;
      if (n.kind == op_kind::sub) return a - b;
      if (n.kind == op_kind::mul) return a.cwiseProduct(b);
      return a.cwiseQuotient(b);
    }
    case op_kind::neg:
      return -in(0);
    case op_kind::exp:
      return in(0).array().exp().matrix();
    case op_kind::log:
      return in(0).array().log().matrix();
    case op_kind::sqrt:
      return in(0).array().sqrt().matrix();
    case op_kind::square:
      return in(0).array().square().matrix();
    case op_kind::sigmoid:
      return in(0).unaryExpr(&stable_sigmoid);
    case op_kind::log_sigmoid:
      return in(0).unaryExpr(&stable_log_sigmoid);
    case op_kind::dot:
      return vector::Constant(1, in(0).dot(in(1)));
    case op_kind::sum:
      return vector::Constant(1, in(0).sum());
    case op_kind::scale:
      return in(0)[0] * in(1);
    case op_kind::affine: {
      vector y = n.transpose ? vector(n.mat->transpose() * in(0))
                             : vector(*n.mat * in(0));
      if (n.n_inputs == 2) y += in(1);
      return y;
    }
    case op_kind::clip:
      return in(0).cwiseMax(n.lo).cwiseMin(n.hi);
    case op_kind::cumsum: {
      const vector& x = in(0);
      vector y(x.size());
      double acc = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        acc += x[i];
        y[i] = acc;
      }
      return y;
    }
    case op_kind::gather: {
      const vector& x = in(0);
      vector y(static_cast<Eigen::Index>(n.indices.size()));
      for (std::size_t j = 0; j < n.indices.size(); ++j) {
        y[static_cast<Eigen::Index>(j)] = x[n.indices[j]];
      }
      return y;
    }
    case op_kind::tril_from_raw: {
      const vector& p = in(0);
      const auto d = tril_dim_from_packed(p.size());
      vector l = vector::Zero(d * d);
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j, ++k) {
          l[i * d + j] = (i == j) ? std::exp(p[k]) : p[k];
        }
      }
      return l;
    }
    case op_kind::tril_matvec: {
      const auto d = in(1).size();
      const_tril_map l(in(0).data(), d, d);
      return l.triangularView<Eigen::Lower>() * in(1);
    }
    case op_kind::tril_solve: {
      const auto d = in(1).size();
      const_tril_map l(in(0).data(), d, d);
      return l.triangularView<Eigen::Lower>().solve(in(1));
    }
    case op_kind::tril_solve_transposed: {
      const auto d = in(1).size();
      const_tril_map l(in(0).data(), d, d);
      return l.transpose().triangularView<Eigen::Upper>().solve(in(1));
    }
  }
  throw usage_error("unknown op kind");
}

void tape::backprop(const node& n, const vector& g,
                    std::vector<vector>& adj) const {
  const auto in = [&](std::size_t i) -> const vector& {
    return nodes_[n.inputs[i]].value;
  };
  const auto push_to = [&](std::size_t i, const vector& contribution) {
    const auto target = in(i).size();
    accumulate(adj[n.inputs[i]], contribution, target);
  };
  switch (n.kind) {
    case op_kind::leaf:
    case op_kind::constant:
      return;
    case op_kind::add:
      push_to(0, g);
      push_to(1, g);
      return;
    case op_kind::sub:
      push_to(0, g);
      push_to(1, -g);
      return;
    case op_kind::mul: {
      const auto size = g.size();
      push_to(0, g.cwiseProduct(broadcast(in(1), size)));
      push_to(1, g.cwiseProduct(broadcast(in(0), size)));
      return;
    }
    case op_kind::div: {
      const auto size = g.size();
      const vector b = broadcast(in(1), size);
      push_to(0, g.cwiseQuotient(b));
      push_to(1, -g.cwiseProduct(n.value).cwiseQuotient(b));
      return;
    }
    case op_kind::neg:
      push_to(0, -g);
      return;
    case op_kind::exp:
      push_to(0, g.cwiseProduct(n.value));
      return;
    case op_kind::log:
      push_to(0, g.cwiseQuotient(in(0)));
      return;
    case op_kind::sqrt:
      push_to(0, (0.5 * g.array() / n.value.array()).matrix());
      return;
    case op_kind::square:
      push_to(0, 2.0 * g.cwiseProduct(in(0)));
      return;
    case op_kind::sigmoid:
      push_to(0, (g.array() * n.value.array() * (1.0 - n.value.array()))
                     .matrix());
      return;
    case op_kind::log_sigmoid: {
      const vector s = (-in(0)).unaryExpr(&stable_sigmoid);
      push_to(0, g.cwiseProduct(s));
      return;
    }
    case op_kind::dot:
      push_to(0, g[0] * in(1));
      push_to(1, g[0] * in(0));
      return;
    case op_kind::sum:
      push_to(0, vector::Constant(in(0).size(), g[0]));
      return;
    case op_kind::scale:
      push_to(0, vector::Constant(1, g.dot(in(1))));
      push_to(1, in(0)[0] * g);
      return;
    case op_kind::affine:
      push_to(0, n.transpose ? vector(*n.mat * g)
                             : vector(n.mat->transpose() * g));
      if (n.n_inputs == 2) push_to(1, g);
      return;
    case op_kind::clip: {
      const vector& x = in(0);
      vector r(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        r[i] = (x[i] >= n.lo && x[i] <= n.hi) ? g[i] : 0.0;
      }
      push_to(0, r);
      return;
    }
    case op_kind::cumsum: {
      vector r(g.size());
      double acc = 0.0;
      for (Eigen::Index i = g.size() - 1; i >= 0; --i) {
        acc += g[i];
        r[i] = acc;
      }
      push_to(0, r);
      return;
    }
    case op_kind::gather: {
      vector r = vector::Zero(in(0).size());
      for (std::size_t j = 0; j < n.indices.size(); ++j) {
        r[n.indices[j]] += g[static_cast<Eigen::Index>(j)];
      }
      push_to(0, r);
      return;
    }
    case op_kind::tril_from_raw: {
      const auto d = square_dim(n.value.size());
      vector r(in(0).size());
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j, ++k) {
          r[k] = (i == j) ? g[i * d + j] * n.value[i * d + j] : g[i * d + j];
        }
      }
      push_to(0, r);
      return;
    }
    case op_kind::tril_matvec: {
      const auto d = in(1).size();
      const_tril_map l(in(0).data(), d, d);
      const vector& x = in(1);
      vector gl = vector::Zero(d * d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) gl[i * d + j] = g[i] * x[j];
      }
      push_to(0, gl);
      push_to(1, l.transpose().triangularView<Eigen::Upper>() * g);
      return;
    }
    case op_kind::tril_solve: {
      // u = L^{-1} r:  r_bar = L^{-T} g,  L_bar = -r_bar u^T (lower part)
      const auto d = in(1).size();
      const_tril_map l(in(0).data(), d, d);
      const vector b = l.transpose().triangularView<Eigen::Upper>().solve(g);
      vector gl = vector::Zero(d * d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          gl[i * d + j] = -b[i] * n.value[j];
        }
      }
      push_to(0, gl);
      push_to(1, b);
      return;
    }
    case op_kind::tril_solve_transposed: {
      // w = L^{-T} r:  r_bar = L^{-1} g,  L_bar = -w r_bar^T (lower part)
      const auto d = in(1).size();
      const_tril_map l(in(0).data(), d, d);
      const vector a = l.triangularView<Eigen::Lower>().solve(g);
      vector gl = vector::Zero(d * d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          gl[i * d + j] = -n.value[i] * a[j];
        }
      }
      push_to(0, gl);
      push_to(1, a);
      return;
    }
  }
}

std::vector<vector> tape::gradient(var output, std::span<const var> wrt) {
  if (!output.valid() || &output.owner() != this) {
    throw usage_error("gradient: output lives on a different tape");
  }
  if (output.size() != 1) {
    throw usage_error("gradient: output must be scalar, has size " +
                      std::to_string(output.size()));
  }
  for (const var& w : wrt) {
    if (!w.valid() || &w.owner() != this) {
      throw usage_error("gradient: wrt variable lives on a different tape");
    }
    if (w.id() > output.id()) {
      throw usage_error("gradient: wrt variable recorded after the output");
    }
  }
  std::vector<vector> adj(output.id() + 1);
  adj[output.id()] = vector::Ones(1);
  std::size_t visits = 0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    if (adj[i].size() == 0) continue;
    ++visits;
    backprop(nodes_[i], adj[i], adj);
  }
  last_sweep_visits_ = visits;

  std::vector<vector> result;
  result.reserve(wrt.size());
  for (const var& w : wrt) {
    const vector& a = adj[w.id()];
    result.push_back(a.size() == 0 ? vector(vector::Zero(w.size())) : a);
  }
  return result;
}

bool tape::replay_matches() const {
  std::vector<vector> values;
  values.reserve(nodes_.size());
  for (const node& n : nodes_) {
    vector v = evaluate_with(n, [&values](std::size_t i) -> const vector& {
      return values[i];
    });
    if (v.size() != n.value.size()) return false;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::bit_cast<std::uint64_t>(v[i]) !=
          std::bit_cast<std::uint64_t>(n.value[i])) {
        return false;
      }
    }
    values.push_back(std::move(v));
  }
  return true;
}

// Free-function front ends.

namespace {

var binary(op_kind k, var a, var b) {
  const var in[2] = {a, b};
  return a.owner().record(k, in);
}

var unary(op_kind k, var x) {
  const var in[1] = {x};
  return x.owner().record(k, in);
}

}  // namespace

var operator+(var a, var b) { return binary(op_kind::add, a, b); }
var operator-(var a, var b) { return binary(op_kind::sub, a, b); }
var operator*(var a, var b) { return binary(op_kind::mul, a, b); }
var operator/(var a, var b) { return binary(op_kind::div, a, b); }
var operator-(var a) { return unary(op_kind::neg, a); }
var operator+(var a, double b) { return a + a.owner().constant(b); }
var operator+(double a, var b) { return b.owner().constant(a) + b; }
var operator-(var a, double b) { return a - a.owner().constant(b); }
var operator-(double a, var b) { return b.owner().constant(a) - b; }
var operator*(var a, double b) { return a * a.owner().constant(b); }
var operator*(double a, var b) { return b.owner().constant(a) * b; }
var operator/(var a, double b) { return a / a.owner().constant(b); }
var operator/(double a, var b) { return b.owner().constant(a) / b; }

var exp(var x) { return unary(op_kind::exp, x); }
var log(var x) { return unary(op_kind::log, x); }
var sqrt(var x) { return unary(op_kind::sqrt, x); }
var square(var x) { return unary(op_kind::square, x); }
var sigmoid(var x) { return unary(op_kind::sigmoid, x); }
var log_sigmoid(var x) { return unary(op_kind::log_sigmoid, x); }
var dot(var a, var b) { return binary(op_kind::dot, a, b); }
var sum(var x) { return unary(op_kind::sum, x); }
var scale(var s, var x) { return binary(op_kind::scale, s, x); }
var cumsum(var x) { return unary(op_kind::cumsum, x); }
var clip(var x, double lo, double hi) { return x.owner().clip(x, lo, hi); }
var gather(var x, std::vector<Eigen::Index> indices) {
  return x.owner().gather(x, std::move(indices));
}
var element(var x, Eigen::Index i) { return gather(x, {i}); }
var matvec(std::shared_ptr<const matrix> a, var x, bool transpose) {
  return x.owner().affine(std::move(a), x, transpose);
}
var affine(std::shared_ptr<const matrix> a, var x, var b, bool transpose) {
  return x.owner().affine(std::move(a), x, b, transpose);
}
var tril_from_raw(var packed) { return unary(op_kind::tril_from_raw, packed); }
var tril_matvec(var l, var x) { return binary(op_kind::tril_matvec, l, x); }
var tril_solve(var l, var r) { return binary(op_kind::tril_solve, l, r); }
var tril_solve_transposed(var l, var r) {
  return binary(op_kind::tril_solve_transposed, l, r);
}

}  // namespace sldais::ad
