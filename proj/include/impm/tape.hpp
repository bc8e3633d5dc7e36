#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "impm/errors.hpp"

namespace impm::ad {

// Elementary operations recorded on the tape. Ops with a `_c` suffix take one
// recorded parent and one compile-time-constant double (kept in d1 so the
// tape can be replayed exactly).
enum class Op : std::uint8_t {
  input,
  add,    // a + b
  mul,    // a * b
  div,    // a / b
  neg,    // -a
  log,    // ln a
  exp,    // e^a
  sqrt,   // sqrt a
  abs,    // |a|, partial 0 at a == 0
  add_c,  // a + c
  rsub_c, // c - a
  mul_c,  // a * c
  div_c,  // a / c
  rdiv_c, // c / a
  pow_c,  // a ^ c
};

const char* op_name(Op op);

class Tape;

// Recorded scalar value. A Var with id < 0 carries no tape node and behaves
// as a plain constant, so templated numeric code can mix literals and
// recorded values without touching the tape explicitly.
struct Var {
  double v = 0.0;
  std::int32_t id = -1;
  Tape* tape = nullptr;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit from double is the point
  Var(double value, std::int32_t node, Tape* t) : v(value), id(node), tape(t) {}

  bool recorded() const { return id >= 0; }
};

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.v; }

// One node of the recorded graph, exposed read-only for inspection.
struct TapeNode {
  Op op;
  std::int32_t parent0;
  std::int32_t parent1;  // -1 for unary ops
  double partial0;
  double partial1;  // holds the folded constant for `_c` ops
  double value;
};

class Tape {
 public:
  // Independent variables must be registered before any operation nodes so
  // that backward() can return the gradient as the leading block.
  Var input(double value) {
    if (n_nodes_ > n_inputs_)
      throw UnsupportedOperation("tape inputs must be registered before any operation is recorded");
    std::int32_t id = push(Op::input, -1, -1, 0.0, 0.0, value);
    ++n_inputs_;
    return Var(value, id, this);
  }

  void set_outputs(std::span<const Var> outs) {
    outputs_.clear();
    outputs_.reserve(outs.size());
    for (const Var& o : outs) {
      if (!o.recorded() || o.tape != this)
        throw UnsupportedOperation("tape output is not a node of this tape");
      outputs_.push_back(o.id);
    }
  }

  std::size_t node_count() const { return val_.size(); }
  int input_count() const { return n_inputs_; }
  const std::vector<std::int32_t>& output_ids() const { return outputs_; }
  double value(std::int32_t node) const { return val_[node]; }

  std::vector<double> output_values() const {
    std::vector<double> out(outputs_.size());
    for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = val_[outputs_[k]];
    return out;
  }

  TapeNode node(std::int32_t i) const {
    return TapeNode{op_[i], p0_[i], p1_[i], d0_[i], d1_[i], val_[i]};
  }

  // Seeded reverse pass: grad <- J^T seed over the recorded function, where
  // rows of J correspond to output_ids. The tape itself is not mutated, so
  // concurrent passes are safe when each caller supplies its own workspace.
  void backward(std::span<const double> seed, std::span<double> grad,
                std::vector<double>& adjoint) const {
    if (seed.size() != outputs_.size())
      throw UnsupportedOperation("seed dimension " + std::to_string(seed.size()) +
                                 " does not match output count " + std::to_string(outputs_.size()));
    assert(grad.size() == static_cast<std::size_t>(n_inputs_));
    adjoint.assign(val_.size(), 0.0);
    for (std::size_t k = 0; k < outputs_.size(); ++k) adjoint[outputs_[k]] += seed[k];
    for (std::int32_t i = static_cast<std::int32_t>(val_.size()) - 1; i >= n_inputs_; --i) {
      const double a = adjoint[i];
      if (a == 0.0) continue;
      adjoint[p0_[i]] += a * d0_[i];
      if (p1_[i] >= 0) adjoint[p1_[i]] += a * d1_[i];
    }
    for (int i = 0; i < n_inputs_; ++i) grad[i] = adjoint[i];
  }

  std::vector<double> backward(std::span<const double> seed) const {
    std::vector<double> grad(n_inputs_);
    std::vector<double> adjoint;
    backward(seed, grad, adjoint);
    return grad;
  }

  // Re-evaluates every node value from the recorded structure; used to check
  // that a recording reproduces the direct evaluation bit for bit.
  std::vector<double> replay() const;

  // Drops all nodes but keeps capacity, so a solver can reuse one tape
  // allocation across Newton iterations.
  void clear() {
    op_.clear();
    p0_.clear();
    p1_.clear();
    d0_.clear();
    d1_.clear();
    val_.clear();
    outputs_.clear();
    n_inputs_ = 0;
    n_nodes_ = 0;
  }

  void reserve(std::size_t n) {
    op_.reserve(n);
    p0_.reserve(n);
    p1_.reserve(n);
    d0_.reserve(n);
    d1_.reserve(n);
    val_.reserve(n);
  }

  std::int32_t push(Op op, std::int32_t a, std::int32_t b, double da, double db, double v) {
    op_.push_back(op);
    p0_.push_back(a);
    p1_.push_back(b);
    d0_.push_back(da);
    d1_.push_back(db);
    val_.push_back(v);
    return n_nodes_++;
  }

 private:
  std::vector<Op> op_;
  std::vector<std::int32_t> p0_, p1_;
  std::vector<double> d0_, d1_;
  std::vector<double> val_;
  std::vector<std::int32_t> outputs_;
  std::int32_t n_inputs_ = 0;
  std::int32_t n_nodes_ = 0;
};

namespace detail {

inline Tape* common_tape(const Var& a, const Var& b) {
  if (a.recorded() && b.recorded()) {
    assert(a.tape == b.tape && "mixing variables from different tapes");
    return a.tape;
  }
  return a.recorded() ? a.tape : (b.recorded() ? b.tape : nullptr);
}

[[noreturn]] void throw_domain(Op op, double value, const Var& x);

}  // namespace detail

// --- arithmetic ---------------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
  const double v = a.v + b.v;
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(v);
  if (a.recorded() && b.recorded()) return Var(v, t->push(Op::add, a.id, b.id, 1.0, 1.0, v), t);
  if (a.recorded()) return Var(v, t->push(Op::add_c, a.id, -1, 1.0, b.v, v), t);
  return Var(v, t->push(Op::add_c, b.id, -1, 1.0, a.v, v), t);
}

inline Var operator-(const Var& a) {
  if (!a.recorded()) return Var(-a.v);
  return Var(-a.v, a.tape->push(Op::neg, a.id, -1, -1.0, 0.0, -a.v), a.tape);
}

inline Var operator-(const Var& a, const Var& b) {
  const double v = a.v - b.v;
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(v);
  if (a.recorded() && b.recorded()) return Var(v, t->push(Op::add, a.id, b.id, 1.0, -1.0, v), t);
  if (a.recorded()) return Var(v, t->push(Op::add_c, a.id, -1, 1.0, -b.v, v), t);
  return Var(v, t->push(Op::rsub_c, b.id, -1, -1.0, a.v, v), t);
}

inline Var operator*(const Var& a, const Var& b) {
  const double v = a.v * b.v;
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(v);
  if (a.recorded() && b.recorded()) return Var(v, t->push(Op::mul, a.id, b.id, b.v, a.v, v), t);
  if (a.recorded()) return Var(v, t->push(Op::mul_c, a.id, -1, b.v, b.v, v), t);
  return Var(v, t->push(Op::mul_c, b.id, -1, a.v, a.v, v), t);
}

inline Var operator/(const Var& a, const Var& b) {
  if (b.v == 0.0) detail::throw_domain(Op::div, b.v, b);
  const double v = a.v / b.v;
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(v);
  if (a.recorded() && b.recorded())
    return Var(v, t->push(Op::div, a.id, b.id, 1.0 / b.v, -v / b.v, v), t);
  if (a.recorded()) return Var(v, t->push(Op::div_c, a.id, -1, 1.0 / b.v, b.v, v), t);
  return Var(v, t->push(Op::rdiv_c, b.id, -1, -v / b.v, a.v, v), t);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

// Comparisons act on values; they steer non-differentiated branch predicates.
inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }

// --- elementary functions ------------------------------------------------

inline Var log(const Var& a) {
  if (a.v <= 0.0) detail::throw_domain(Op::log, a.v, a);
  const double v = std::log(a.v);
  if (!a.recorded()) return Var(v);
  return Var(v, a.tape->push(Op::log, a.id, -1, 1.0 / a.v, 0.0, v), a.tape);
}

inline Var exp(const Var& a) {
  const double v = std::exp(a.v);
  if (!a.recorded()) return Var(v);
  return Var(v, a.tape->push(Op::exp, a.id, -1, v, 0.0, v), a.tape);
}

inline Var sqrt(const Var& a) {
  if (a.v < 0.0) detail::throw_domain(Op::sqrt, a.v, a);
  const double v = std::sqrt(a.v);
  if (!a.recorded()) return Var(v);
  // Partial is +inf at 0; backward skips it unless the node carries adjoint.
  return Var(v, a.tape->push(Op::sqrt, a.id, -1, 0.5 / v, 0.0, v), a.tape);
}

inline Var abs(const Var& a) {
  const double v = std::abs(a.v);
  if (!a.recorded()) return Var(v);
  const double d = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
  return Var(v, a.tape->push(Op::abs, a.id, -1, d, 0.0, v), a.tape);
}

// Power with a constant (non-differentiated) exponent.
inline Var pow(const Var& a, double c) {
  const double v = std::pow(a.v, c);
  if (!a.recorded()) return Var(v);
  const double d = c * std::pow(a.v, c - 1.0);
  return Var(v, a.tape->push(Op::pow_c, a.id, -1, d, c, v), a.tape);
}

Var pow(const Var& a, const Var& b);  // rejected: exponent must be constant

// min/max return the winning operand, so the full subgradient goes to the
// active branch; ties go to the first argument.
inline Var min(const Var& a, const Var& b) { return a.v <= b.v ? a : b; }
inline Var max(const Var& a, const Var& b) { return a.v >= b.v ? a : b; }

// Conditional select on a non-differentiated predicate.
inline Var select(bool take_first, const Var& a, const Var& b) { return take_first ? a : b; }
inline double select(bool take_first, double a, double b) { return take_first ? a : b; }

// Functional recording front end: f receives the registered inputs and
// returns the outputs to seed from.
template <class F>
std::pair<Tape, std::vector<double>> record(F&& f, std::span<const double> x) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(x.size());
  for (double xi : x) vars.push_back(tape.input(xi));
  std::vector<Var> outs = f(std::span<const Var>(vars));
  tape.set_outputs(outs);
  std::vector<double> values = tape.output_values();
  return {std::move(tape), std::move(values)};
}

}  // namespace impm::ad

namespace impm {
using ad::value_of;  // so unqualified value_of(x) works on doubles too
}
