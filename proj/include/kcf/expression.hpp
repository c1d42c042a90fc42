#pragma once

#include "kcf/core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace kcf {

/**
 * @brief Immutable closed-form scalar expression over a real vector.
 *
 * Nodes are shared, so copies are cheap and expressions may be evaluated
 * concurrently. Used to build analytic state dictionaries (variables are
 * state coordinates) and analytic input factors (variables are inputs).
 */
class Expr {
 public:
  enum class Op { constant, variable, add, mul, pow, sin, cos, tanh, exp };

  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double value) { return Expr(Node{Op::constant, value, 0, 0, {}}); }
  static Expr variable(Index index) {
    if (index < 0) throw ValidationError("expression variable index must be non-negative");
    return Expr(Node{Op::variable, 0.0, index, 0, {}});
  }
  static Expr pow(const Expr& base, int exponent) {
    if (exponent < 0) throw ValidationError("expression exponent must be non-negative");
    return Expr(Node{Op::pow, 0.0, 0, exponent, {base}});
  }
  static Expr unary(Op op, const Expr& arg) {
    if (!is_unary(op)) throw ValidationError("not a unary expression operator");
    return Expr(Node{op, 0.0, 0, 0, {arg}});
  }
  static Expr nary(Op op, std::vector<Expr> args) {
    if (op != Op::add && op != Op::mul) throw ValidationError("only add and mul take argument lists");
    if (args.empty()) return constant(op == Op::add ? 0.0 : 1.0);
    return Expr(Node{op, 0.0, 0, 0, std::move(args)});
  }

  friend Expr operator+(const Expr& a, const Expr& b) { return nary(Op::add, {a, b}); }
  friend Expr operator*(const Expr& a, const Expr& b) { return nary(Op::mul, {a, b}); }
  friend Expr operator*(double c, const Expr& a) { return nary(Op::mul, {constant(c), a}); }

  static bool is_unary(Op op) { return op == Op::sin || op == Op::cos || op == Op::tanh || op == Op::exp; }

  Op op() const { return node_->op; }
  double value() const { return node_->value; }
  Index index() const { return node_->index; }
  int exponent() const { return node_->exponent; }
  const std::vector<Expr>& args() const { return node_->args; }

  template <typename Vec>
  double eval(const Vec& x) const {
    const Node& n = *node_;
    switch (n.op) {
      case Op::constant: return n.value;
      case Op::variable: return x(n.index);
      case Op::add: {
        double s = 0.0;
        for (const auto& a : n.args) s += a.eval(x);
        return s;
      }
      case Op::mul: {
        double p = 1.0;
        for (const auto& a : n.args) p *= a.eval(x);
        return p;
      }
      case Op::pow: {
        const double b = n.args[0].eval(x);
        double p = 1.0;
        for (int k = 0; k < n.exponent; ++k) p *= b;
        return p;
      }
      case Op::sin: return std::sin(n.args[0].eval(x));
      case Op::cos: return std::cos(n.args[0].eval(x));
      case Op::tanh: return std::tanh(n.args[0].eval(x));
      case Op::exp: return std::exp(n.args[0].eval(x));
    }
    return 0.0;
  }

  /// Largest variable index referenced, or -1 for a constant expression.
  Index max_variable() const {
    if (node_->op == Op::variable) return node_->index;
    Index m = -1;
    for (const auto& a : node_->args) m = std::max(m, a.max_variable());
    return m;
  }

  /// True when built only from constants, variables, products and integer powers.
  bool is_polynomial() const {
    switch (node_->op) {
      case Op::constant:
      case Op::variable: return true;
      case Op::add:
      case Op::mul:
      case Op::pow:
        for (const auto& a : node_->args)
          if (!a.is_polynomial()) return false;
        return true;
      default: return false;
    }
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::constant: return "const";
      case Op::variable: return "var";
      case Op::add: return "add";
      case Op::mul: return "mul";
      case Op::pow: return "pow";
      case Op::sin: return "sin";
      case Op::cos: return "cos";
      case Op::tanh: return "tanh";
      case Op::exp: return "exp";
    }
    return "?";
  }

  static Op op_from_name(const std::string& s) {
    for (Op op : {Op::constant, Op::variable, Op::add, Op::mul, Op::pow, Op::sin, Op::cos, Op::tanh, Op::exp})
      if (s == op_name(op)) return op;
    throw ValidationError("unknown expression operator '" + s + "'");
  }

 private:
  struct Node {
    Op op;
    double value;
    Index index;
    int exponent;
    std::vector<Expr> args;
  };

  explicit Expr(Node n) : node_(std::make_shared<const Node>(std::move(n))) {}

  std::shared_ptr<const Node> node_;
};

/// x_i
inline Expr var(Index i) { return Expr::variable(i); }

/// The monomial prod_i x_i^{powers[i]}.
inline Expr monomial(const std::vector<int>& powers) {
  std::vector<Expr> factors;
  for (std::size_t i = 0; i < powers.size(); ++i) {
    if (powers[i] == 1) factors.push_back(var(static_cast<Index>(i)));
    else if (powers[i] > 1) factors.push_back(Expr::pow(var(static_cast<Index>(i)), powers[i]));
  }
  if (factors.empty()) return Expr::constant(1.0);
  if (factors.size() == 1) return factors.front();
  return Expr::nary(Expr::Op::mul, std::move(factors));
}

/**
 * @brief All monomials in n variables with total degree in [1, max_degree].
 *
 * Ordered by degree, then lexicographically with the first variable's power
 * decreasing, so degree 1 is x_0, ..., x_{n-1}.
 */
inline std::vector<Expr> monomials(Index n, int max_degree) {
  std::vector<Expr> out;
  std::vector<int> powers(static_cast<std::size_t>(n), 0);
  for (int degree = 1; degree <= max_degree; ++degree) {
    // Enumerate compositions of `degree` into n parts.
    auto rec = [&](auto&& self, Index pos, int remaining) -> void {
      if (pos == n - 1) {
        powers[static_cast<std::size_t>(pos)] = remaining;
        out.push_back(monomial(powers));
        return;
      }
      for (int p = remaining; p >= 0; --p) {
        powers[static_cast<std::size_t>(pos)] = p;
        self(self, pos + 1, remaining - p);
      }
    };
    rec(rec, 0, degree);
  }
  return out;
}

}  // namespace kcf
