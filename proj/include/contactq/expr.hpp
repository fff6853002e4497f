#pragma once

// Infix expression trees over a fixed, ordered variable list.
//
// Grammar (recursive descent):
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := ('-'|'+') unary | power
//   power   := primary ('^' unary)?          // right-associative
//   primary := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//
// '-x^2' parses as -(x^2). Function calls: exp, log, sin, cos, sqrt.
// Identifiers resolve positionally against the variable list given to parse().
// Integer constant exponents with |n| <= 64 are evaluated by repeated
// multiplication so that negative bases stay legal; everything else goes
// through exp(y*log(x)) with a domain check.

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "contactq/dual.hpp"

namespace cq {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : std::runtime_error(message + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Builtin { exp, log, sin, cos, sqrt };

struct ExprNode {
  enum class Kind { constant, variable, add, sub, mul, div, neg, pow, call };

  Kind kind{};
  double value = 0.0;             // constant
  int var_index = -1;             // variable
  std::string name;               // variable or function spelling
  Builtin fn{};                   // call
  long int_exponent = 0;          // pow fast path
  bool has_int_exponent = false;  // pow fast path
  std::shared_ptr<const ExprNode> a, b;
};

class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const ExprNode> root) : root_(std::move(root)) {}

  bool empty() const { return root_ == nullptr; }
  const ExprNode& root() const { return *root_; }
  std::shared_ptr<const ExprNode> root_ptr() const { return root_; }

  template <class T>
  T eval(std::span<const T> vars) const;

  // Canonical fully parenthesized rendering; parse(to_string()) reproduces
  // the tree structurally.
  std::string to_string() const;

 private:
  std::shared_ptr<const ExprNode> root_;
};

// Parses `text` against the ordered variable list; throws ParseError with a
// byte position on malformed input or unknown identifiers.
Expr parse_expression(const std::string& text, const std::vector<std::string>& variables);

bool structurally_equal(const Expr& a, const Expr& b);

Expr constant_expr(double value);

namespace detail {

template <class T>
T eval_node(const ExprNode& n, std::span<const T> vars) {
  using Kind = ExprNode::Kind;
  switch (n.kind) {
    case Kind::constant:
      return T(n.value);
    case Kind::variable:
      return vars[static_cast<std::size_t>(n.var_index)];
    case Kind::add:
      return eval_node(*n.a, vars) + eval_node(*n.b, vars);
    case Kind::sub:
      return eval_node(*n.a, vars) - eval_node(*n.b, vars);
    case Kind::mul:
      return eval_node(*n.a, vars) * eval_node(*n.b, vars);
    case Kind::div: {
      T num = eval_node(*n.a, vars);
      T den = eval_node(*n.b, vars);
      if (scalar_value(den) == 0.0) throw EvalError("division by zero");
      return num / den;
    }
    case Kind::neg:
      return -eval_node(*n.a, vars);
    case Kind::pow: {
      T base = eval_node(*n.a, vars);
      if (n.has_int_exponent) return powi(base, n.int_exponent);
      T expo = eval_node(*n.b, vars);
      if (scalar_value(base) <= 0.0)
        throw EvalError("power with non-integer exponent needs a positive base");
      return exp(expo * log(base));
    }
    case Kind::call: {
      T arg = eval_node(*n.a, vars);
      switch (n.fn) {
        case Builtin::exp:
          return exp(arg);
        case Builtin::log:
          if (scalar_value(arg) <= 0.0) throw EvalError("log of a non-positive value");
          return log(arg);
        case Builtin::sin:
          return sin(arg);
        case Builtin::cos:
          return cos(arg);
        case Builtin::sqrt:
          if (scalar_value(arg) < 0.0) throw EvalError("sqrt of a negative value");
          return sqrt(arg);
      }
      throw EvalError("unknown builtin");
    }
  }
  throw EvalError("corrupt expression node");
}

}  // namespace detail

template <class T>
T Expr::eval(std::span<const T> vars) const {
  if (!root_) throw EvalError("evaluating an empty expression");
  return detail::eval_node(*root_, vars);
}

}  // namespace cq
