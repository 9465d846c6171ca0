#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ldesign/error.hpp"

namespace ldesign::numerics {

/// Reverse-mode autodiff over an append-only tape of scalar primitives.
/// Values are evaluated eagerly at node creation; backward() visits nodes in
/// strict reverse creation order, so topological order is creation order.
///
/// Two non-elementary node kinds keep big models cheap:
///  - Affine: out = bias + sum_i w_i * x_i (fused dot product; both weights
///    and inputs are tape nodes), used by the conditioner MLPs.
///  - External: a black-box differentiable function whose value and partial
///    derivatives w.r.t. its tape inputs are supplied at creation time (used
///    for SDF queries, whose spatial gradients are computed analytically).
class Tape {
 public:
  enum class Op : std::uint8_t {
    Leaf, Const,
    Add, Sub, Mul, Div, Neg,
    AddC, SubCR, MulC,   // node (+|-) constant, constant - node, node * constant
    Exp, Log, Tanh, Relu, Sigmoid, Sin, Cos, Sqrt,
    PowC,                // node ^ constant
    Min, Max, Select,    // ties take the first argument; relu'(0) = 0
    Affine, External,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;  // operand ids / (offset,count,bias) for Affine
    double aux = 0.0;            // constant operand where applicable
  };

  Tape() = default;

  int size() const { return static_cast<int>(nodes_.size()); }
  double value(int id) const { return val_[id]; }
  double adjoint(int id) const { return adj_[id]; }

  int leaf(double v) { return push({Op::Leaf}, v); }
  int constant(double v) { return push({Op::Const}, v); }

  int add(int x, int y) { return push({Op::Add, x, y}, val_[x] + val_[y]); }
  int sub(int x, int y) { return push({Op::Sub, x, y}, val_[x] - val_[y]); }
  int mul(int x, int y) { return push({Op::Mul, x, y}, val_[x] * val_[y]); }
  int div(int x, int y) { return push({Op::Div, x, y}, val_[x] / val_[y]); }
  int neg(int x) { return push({Op::Neg, x}, -val_[x]); }
  int add_c(int x, double c) { return push({Op::AddC, x, -1, -1, c}, val_[x] + c); }
  int sub_cr(double c, int x) { return push({Op::SubCR, x, -1, -1, c}, c - val_[x]); }
  int mul_c(int x, double c) { return push({Op::MulC, x, -1, -1, c}, val_[x] * c); }
  int exp_(int x) { return push({Op::Exp, x}, std::exp(val_[x])); }
  int log_(int x) { return push({Op::Log, x}, std::log(val_[x])); }
  int tanh_(int x) { return push({Op::Tanh, x}, std::tanh(val_[x])); }
  int relu(int x) { return push({Op::Relu, x}, val_[x] > 0.0 ? val_[x] : 0.0); }
  int sigmoid(int x) {
    double v = 1.0 / (1.0 + std::exp(-val_[x]));
    return push({Op::Sigmoid, x}, v);
  }
  int sin_(int x) { return push({Op::Sin, x}, std::sin(val_[x])); }
  int cos_(int x) { return push({Op::Cos, x}, std::cos(val_[x])); }
  int sqrt_(int x) { return push({Op::Sqrt, x}, std::sqrt(val_[x])); }
  int pow_c(int x, double p) { return push({Op::PowC, x, -1, -1, p}, std::pow(val_[x], p)); }
  int min_(int x, int y) { return push({Op::Min, x, y}, val_[x] <= val_[y] ? val_[x] : val_[y]); }
  int max_(int x, int y) { return push({Op::Max, x, y}, val_[x] >= val_[y] ? val_[x] : val_[y]); }
  /// cond >= 0 picks x, else y; no gradient flows through cond.
  int select(int cond, int x, int y) {
    return push({Op::Select, cond, x, y}, val_[cond] >= 0.0 ? val_[x] : val_[y]);
  }

  /// Fused affine form: bias + sum_i weights[i] * inputs[i].
  int affine(int bias, std::span<const int> weights, std::span<const int> inputs) {
    if (weights.size() != inputs.size())
      throw Error(ErrorKind::Shape, "affine: weight/input length mismatch");
    int off = static_cast<int>(args_.size());
    double v = val_[bias];
    for (std::size_t i = 0; i < weights.size(); ++i) {
      args_.push_back(weights[i]);
      args_.push_back(inputs[i]);
      v += val_[weights[i]] * val_[inputs[i]];
    }
    return push({Op::Affine, off, static_cast<int>(weights.size()), bias}, v);
  }

  /// Black-box differentiable node: value plus partials w.r.t. tape inputs.
  int external(double value, std::span<const int> inputs, std::span<const double> partials) {
    if (inputs.size() != partials.size())
      throw Error(ErrorKind::Shape, "external: input/partial length mismatch");
    int off = static_cast<int>(args_.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      args_.push_back(inputs[i]);
      ext_partials_.push_back(partials[i]);
    }
    return push({Op::External, off, static_cast<int>(inputs.size()),
                 static_cast<int>(ext_partials_.size()) - static_cast<int>(inputs.size())},
                value);
  }

  struct Mark {
    int nodes, args, ext;
  };
  Mark mark() const {
    return {size(), static_cast<int>(args_.size()), static_cast<int>(ext_partials_.size())};
  }
  /// Drop everything created after the mark (values of kept nodes persist).
  void rewind(const Mark& m) {
    nodes_.resize(m.nodes);
    val_.resize(m.nodes);
    adj_.resize(m.nodes);
    args_.resize(m.args);
    ext_partials_.resize(m.ext);
  }

  void set_leaf(int id, double v) { val_[id] = v; }

  void zero_adjoints() { std::fill(adj_.begin(), adj_.end(), 0.0); }

  /// Accumulate adjoints for d(seed * node[loss]) into the adjoint array.
  /// Adjoints of nodes created before `from` (typically parameter leaves)
  /// accumulate across calls; newly created nodes start at zero.
  void backward(int loss, double seed = 1.0);

  /// Scan [begin, end) node values, return id of first non-finite or -1.
  int first_nonfinite_value(int begin = 0) const;
  int first_nonfinite_adjoint(int begin = 0) const;

 private:
  int push(Node n, double v) {
    nodes_.push_back(n);
    val_.push_back(v);
    adj_.push_back(0.0);
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> adj_;
  std::vector<int> args_;
  std::vector<double> ext_partials_;
};

/// Convenience handle with operator overloads for building tape programs.
struct Var {
  Tape* t = nullptr;
  int id = -1;
  double value() const { return t->value(id); }
};

inline Var operator+(Var a, Var b) { return {a.t, a.t->add(a.id, b.id)}; }
inline Var operator-(Var a, Var b) { return {a.t, a.t->sub(a.id, b.id)}; }
inline Var operator*(Var a, Var b) { return {a.t, a.t->mul(a.id, b.id)}; }
inline Var operator/(Var a, Var b) { return {a.t, a.t->div(a.id, b.id)}; }
inline Var operator-(Var a) { return {a.t, a.t->neg(a.id)}; }
inline Var operator+(Var a, double c) { return {a.t, a.t->add_c(a.id, c)}; }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return {a.t, a.t->add_c(a.id, -c)}; }
inline Var operator-(double c, Var a) { return {a.t, a.t->sub_cr(c, a.id)}; }
inline Var operator*(Var a, double c) { return {a.t, a.t->mul_c(a.id, c)}; }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) { return {a.t, a.t->mul_c(a.id, 1.0 / c)}; }
inline Var exp(Var a) { return {a.t, a.t->exp_(a.id)}; }
inline Var log(Var a) { return {a.t, a.t->log_(a.id)}; }
inline Var tanh(Var a) { return {a.t, a.t->tanh_(a.id)}; }
inline Var relu(Var a) { return {a.t, a.t->relu(a.id)}; }
inline Var sigmoid(Var a) { return {a.t, a.t->sigmoid(a.id)}; }
inline Var sin(Var a) { return {a.t, a.t->sin_(a.id)}; }
inline Var cos(Var a) { return {a.t, a.t->cos_(a.id)}; }
inline Var sqrt(Var a) { return {a.t, a.t->sqrt_(a.id)}; }
inline Var pow(Var a, double p) { return {a.t, a.t->pow_c(a.id, p)}; }
inline Var min(Var a, Var b) { return {a.t, a.t->min_(a.id, b.id)}; }
inline Var max(Var a, Var b) { return {a.t, a.t->max_(a.id, b.id)}; }
inline Var select(Var cond, Var a, Var b) { return {a.t, cond.t->select(cond.id, a.id, b.id)}; }

/// Evaluate a scalar tape program and its gradient w.r.t. `params`.
/// The program is handed a fresh tape with one leaf per parameter.
/// Throws numerical-overflow if any value or gradient entry is non-finite.
struct GradResult {
  double value;
  std::vector<double> gradient;
};

template <typename Program>
GradResult grad(Program&& program, std::span<const double> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (double p : params) vars.push_back({&tape, tape.leaf(p)});
  Var out = program(tape, vars);
  int bad = tape.first_nonfinite_value();
  if (bad >= 0)
    throw Error(ErrorKind::NumericalOverflow,
                "non-finite value at tape node " + std::to_string(bad));
  tape.backward(out.id);
  bad = tape.first_nonfinite_adjoint();
  if (bad >= 0)
    throw Error(ErrorKind::NumericalOverflow,
                "non-finite adjoint at tape node " + std::to_string(bad));
  GradResult r{out.value(), {}};
  r.gradient.reserve(params.size());
  for (const Var& v : vars) r.gradient.push_back(tape.adjoint(v.id));
  return r;
}

}  // namespace ldesign::numerics
