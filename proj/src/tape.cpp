#include "impm/tape.hpp"

#include <cmath>

namespace impm::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::add: return "add";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::log: return "log";
    case Op::exp: return "exp";
    case Op::sqrt: return "sqrt";
    case Op::abs: return "abs";
    case Op::add_c: return "add_c";
    case Op::rsub_c: return "rsub_c";
    case Op::mul_c: return "mul_c";
    case Op::div_c: return "div_c";
    case Op::rdiv_c: return "rdiv_c";
    case Op::pow_c: return "pow_c";
  }
  return "?";
}

namespace detail {

void throw_domain(Op op, double value, const Var& x) {
  std::string where = x.recorded() ? "node " + std::to_string(x.id) : "constant";
  throw DomainError(std::string(op_name(op)) + " domain violation at " + where +
                    " (operand value " + std::to_string(value) + ")");
}

}  // namespace detail

Var pow(const Var& a, const Var& b) {
  if (b.recorded())
    throw UnsupportedOperation("pow with a recorded exponent is not in the elementary op set");
  return pow(a, b.v);
}

std::vector<double> Tape::replay() const {
  std::vector<double> v(val_.size());
  for (std::size_t i = 0; i < val_.size(); ++i) {
    const std::int32_t a = p0_[i];
    switch (op_[i]) {
      case Op::input: v[i] = val_[i]; break;
      case Op::add: v[i] = v[a] + v[p1_[i]]; break;
      case Op::mul: v[i] = v[a] * v[p1_[i]]; break;
      case Op::div: v[i] = v[a] / v[p1_[i]]; break;
      case Op::neg: v[i] = -v[a]; break;
      case Op::log: v[i] = std::log(v[a]); break;
      case Op::exp: v[i] = std::exp(v[a]); break;
      case Op::sqrt: v[i] = std::sqrt(v[a]); break;
      case Op::abs: v[i] = std::abs(v[a]); break;
      case Op::add_c: v[i] = v[a] + d1_[i]; break;
      case Op::rsub_c: v[i] = d1_[i] - v[a]; break;
      case Op::mul_c: v[i] = v[a] * d1_[i]; break;
      case Op::div_c: v[i] = v[a] / d1_[i]; break;
      case Op::rdiv_c: v[i] = d1_[i] / v[a]; break;
      case Op::pow_c: v[i] = std::pow(v[a], d1_[i]); break;
    }
  }
  return v;
}

}  // namespace impm::ad
