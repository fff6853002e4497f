#pragma once

// Scalar fields: smooth real-valued functions of a fixed number of variables,
// evaluatable at plain doubles and at nested duals up to third order. All
// derivative computation in the toolkit goes through forward-mode seeding of
// these entry points; nothing differentiates symbolically.
//
// Compiled composite fields (implicit sections, fiber integrals, assembled
// Hamiltonians) take one extra dual level internally per nested gradient, so
// the interface depth of 3 supports the algorithms' worst case (mixed second
// derivatives of composites whose definition embeds one inner gradient).

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "contactq/dual.hpp"
#include "contactq/expr.hpp"

namespace cq {

class ScalarField {
 public:
  virtual ~ScalarField() = default;
  virtual int arity() const = 0;
  virtual double value(std::span<const double> args) const = 0;
  virtual D1 value(std::span<const D1> args) const = 0;
  virtual D2 value(std::span<const D2> args) const = 0;
  virtual D3 value(std::span<const D3> args) const = 0;
};

using FieldPtr = std::shared_ptr<const ScalarField>;

// CRTP adapter: Derived supplies `template <class T> T eval_impl(span<const T>)`
// plus arity(); the four virtual entry points are generated here.
template <class Derived>
class FieldBase : public ScalarField {
 public:
  double value(std::span<const double> args) const final {
    return self().template eval_impl<double>(args);
  }
  D1 value(std::span<const D1> args) const final { return self().template eval_impl<D1>(args); }
  D2 value(std::span<const D2> args) const final { return self().template eval_impl<D2>(args); }
  D3 value(std::span<const D3> args) const final { return self().template eval_impl<D3>(args); }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

class CoordinateField final : public FieldBase<CoordinateField> {
 public:
  CoordinateField(int index, int arity) : index_(index), arity_(arity) {
    if (index < 0 || index >= arity)
      throw std::invalid_argument("CoordinateField: index out of range");
  }
  int arity() const override { return arity_; }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    return args[static_cast<std::size_t>(index_)];
  }

 private:
  int index_;
  int arity_;
};

class ExprField final : public FieldBase<ExprField> {
 public:
  ExprField(Expr expr, int arity) : expr_(std::move(expr)), arity_(arity) {}

  int arity() const override { return arity_; }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    return expr_.eval(args);
  }

  const Expr& expr() const { return expr_; }

 private:
  Expr expr_;
  int arity_;
};

class ConstantField final : public FieldBase<ConstantField> {
 public:
  ConstantField(double value, int arity) : value_(value), arity_(arity) {}
  int arity() const override { return arity_; }

  template <class T>
  T eval_impl(std::span<const T>) const {
    return T(value_);
  }

  double constant() const { return value_; }

 private:
  double value_;
  int arity_;
};

// exp(f); used for conformal factors of the form e^f.
class ExpOfField final : public FieldBase<ExpOfField> {
 public:
  explicit ExpOfField(FieldPtr inner) : inner_(std::move(inner)) {}
  int arity() const override { return inner_->arity(); }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    return exp(inner_->value(args));
  }

  const FieldPtr& inner() const { return inner_; }

 private:
  FieldPtr inner_;
};

// 1/f with a domain guard; used for the reciprocal-Hamiltonian rescaling.
class ReciprocalField final : public FieldBase<ReciprocalField> {
 public:
  explicit ReciprocalField(FieldPtr inner) : inner_(std::move(inner)) {}
  int arity() const override { return inner_->arity(); }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    T v = inner_->value(args);
    if (scalar_value(v) == 0.0)
      throw EvalError("reciprocal rescaling evaluated where the function vanishes");
    return 1.0 / v;
  }

 private:
  FieldPtr inner_;
};

class ProductField final : public FieldBase<ProductField> {
 public:
  ProductField(FieldPtr a, FieldPtr b) : a_(std::move(a)), b_(std::move(b)) {}
  int arity() const override { return a_->arity(); }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    return a_->value(args) * b_->value(args);
  }

 private:
  FieldPtr a_, b_;
};

// Fixes a subset of a field's arguments; the free slots become the arguments
// of the restricted field, in their original order.
class PartialBindField final : public FieldBase<PartialBindField> {
 public:
  PartialBindField(FieldPtr base, std::vector<int> free_slots, std::vector<double> fixed_full)
      : base_(std::move(base)), free_slots_(std::move(free_slots)), fixed_(std::move(fixed_full)) {
    if (static_cast<int>(fixed_.size()) != base_->arity())
      throw std::invalid_argument("PartialBindField: fixed-value buffer must cover every slot");
  }

  int arity() const override { return static_cast<int>(free_slots_.size()); }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    std::vector<T> full(fixed_.size());
    for (std::size_t i = 0; i < fixed_.size(); ++i) full[i] = T(fixed_[i]);
    for (std::size_t i = 0; i < free_slots_.size(); ++i)
      full[static_cast<std::size_t>(free_slots_[i])] = args[i];
    return base_->value(std::span<const T>(full));
  }

 private:
  FieldPtr base_;
  std::vector<int> free_slots_;
  std::vector<double> fixed_;
};

inline FieldPtr make_expr_field(const std::string& text, const std::vector<std::string>& vars) {
  return std::make_shared<ExprField>(parse_expression(text, vars), static_cast<int>(vars.size()));
}

inline FieldPtr make_constant_field(double value, int arity) {
  return std::make_shared<ConstantField>(value, arity);
}

inline double field_value(const ScalarField& f, std::span<const double> args) {
  return f.value(args);
}

// Gradient by one forward pass per variable.
inline std::vector<double> field_gradient(const ScalarField& f, std::span<const double> args) {
  const std::size_t m = args.size();
  std::vector<double> grad(m, 0.0);
  std::vector<D1> buf(m);
  for (std::size_t i = 0; i < m; ++i) buf[i] = D1(args[i]);
  for (std::size_t i = 0; i < m; ++i) {
    buf[i].d = 1.0;
    grad[i] = f.value(std::span<const D1>(buf)).d;
    buf[i].d = 0.0;
  }
  return grad;
}

inline double directional_derivative(const ScalarField& f, std::span<const double> args,
                                     std::span<const double> direction) {
  std::vector<D1> buf(args.size());
  for (std::size_t i = 0; i < args.size(); ++i) buf[i] = D1(args[i], direction[i]);
  return f.value(std::span<const D1>(buf)).d;
}

}  // namespace cq
