#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "contactq/dual.hpp"
#include "contactq/expr.hpp"

using namespace cq;

namespace {

double eval_at(const Expr& e, std::vector<double> vars) {
  return e.eval(std::span<const double>(vars));
}

double deriv_at(const Expr& e, std::vector<double> vars, std::size_t wrt) {
  std::vector<D1> buf(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i) buf[i] = D1(vars[i]);
  buf[wrt].d = 1.0;
  return e.eval(std::span<const D1>(buf)).d;
}

}  // namespace

TEST_CASE("arithmetic precedence and associativity") {
  const std::vector<std::string> vars{"x", "y"};
  auto e1 = parse_expression("2 + 3 * 4", {});
  CHECK(eval_at(e1, {}) == doctest::Approx(14.0));

  auto e2 = parse_expression("2 * x - 6 / y", vars);
  CHECK(eval_at(e2, {5.0, 3.0}) == doctest::Approx(8.0));

  // '^' binds tighter than unary minus and associates to the right
  auto e3 = parse_expression("-x^2", vars);
  CHECK(eval_at(e3, {3.0, 0.0}) == doctest::Approx(-9.0));

  auto e4 = parse_expression("2^3^2", {});
  CHECK(eval_at(e4, {}) == doctest::Approx(512.0));

  auto e5 = parse_expression("(2^3)^2", {});
  CHECK(eval_at(e5, {}) == doctest::Approx(64.0));

  auto e6 = parse_expression("10 - 3 - 4", {});
  CHECK(eval_at(e6, {}) == doctest::Approx(3.0));
}

TEST_CASE("builtin functions and numeric literals") {
  auto e = parse_expression("exp(1) + log(exp(2)) + sin(0) + cos(0) + sqrt(16)", {});
  CHECK(eval_at(e, {}) == doctest::Approx(std::exp(1.0) + 2.0 + 0.0 + 1.0 + 4.0));

  auto lit = parse_expression("1.5e2 + .25 + 3e-1", {});
  CHECK(eval_at(lit, {}) == doctest::Approx(150.55));
}

TEST_CASE("integer and fractional exponents") {
  const std::vector<std::string> vars{"u"};
  // negative base with integer exponent is fine
  auto e1 = parse_expression("u^3", vars);
  CHECK(eval_at(e1, {-2.0}) == doctest::Approx(-8.0));
  auto e2 = parse_expression("u^(-2)", vars);
  CHECK(eval_at(e2, {4.0}) == doctest::Approx(1.0 / 16.0));
  // fractional exponent needs a positive base
  auto e3 = parse_expression("u^0.5", vars);
  CHECK(eval_at(e3, {9.0}) == doctest::Approx(3.0));
  CHECK_THROWS_AS(eval_at(e3, {-9.0}), EvalError);
}

TEST_CASE("domain errors carry context") {
  const std::vector<std::string> vars{"x"};
  CHECK_THROWS_AS(eval_at(parse_expression("1 / x", vars), {0.0}), EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("log(x)", vars), {-1.0}), EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("sqrt(x)", vars), {-1.0}), EvalError);
}

TEST_CASE("parse errors report byte positions") {
  const std::vector<std::string> vars{"x"};
  CHECK_THROWS_AS(parse_expression("x + ", vars), ParseError);
  CHECK_THROWS_AS(parse_expression("x + qq", vars), ParseError);
  CHECK_THROWS_AS(parse_expression("(x + 1", vars), ParseError);
  CHECK_THROWS_AS(parse_expression("x ? 1", vars), ParseError);
  CHECK_THROWS_AS(parse_expression("sin(x, x)", vars), ParseError);
  CHECK_THROWS_AS(parse_expression("x 2", vars), ParseError);

  try {
    parse_expression("x + qq", vars);
    CHECK(false);
  } catch (const ParseError& err) {
    CHECK(err.position() == 4);
    CHECK(std::string(err.what()).find("position 4") != std::string::npos);
  }
}

TEST_CASE("printing round-trips through the parser") {
  const std::vector<std::string> vars{"x", "y", "z"};
  const std::vector<std::string> samples{
      "x + y*z",
      "-x^2 + 3*(y - z)/(1 + x^2)",
      "exp(-x^2/2) * cos(3*y) - sqrt(1 + z^2)",
      "2^3^x",
      "x/y/z - x^(-3)",
  };
  std::mt19937_64 rng(911);
  std::uniform_real_distribution<double> dist(0.2, 1.7);
  for (const auto& text : samples) {
    auto parsed = parse_expression(text, vars);
    auto reparsed = parse_expression(parsed.to_string(), vars);
    CHECK_MESSAGE(structurally_equal(parsed, reparsed), "round-trip failed for: ", text);
    for (int k = 0; k < 5; ++k) {
      std::vector<double> p{dist(rng), dist(rng), dist(rng)};
      CHECK(eval_at(parsed, p) == doctest::Approx(eval_at(reparsed, p)).epsilon(1e-14));
    }
  }
}

TEST_CASE("derivatives through dual evaluation match hand values") {
  const std::vector<std::string> vars{"x", "y"};
  auto e = parse_expression("x^2 * sin(y) + exp(x*y)", vars);
  const double x = 0.7, y = 1.3;
  // d/dx = 2x sin(y) + y exp(xy)
  CHECK(deriv_at(e, {x, y}, 0) ==
        doctest::Approx(2 * x * std::sin(y) + y * std::exp(x * y)).epsilon(1e-13));
  // d/dy = x^2 cos(y) + x exp(xy)
  CHECK(deriv_at(e, {x, y}, 1) ==
        doctest::Approx(x * x * std::cos(y) + x * std::exp(x * y)).epsilon(1e-13));

  // second derivative in x via nested duals: d2/dx2 = 2 sin(y) + y^2 exp(xy)
  std::vector<D2> buf{D2(D1(x, 1.0), D1(1.0, 0.0)), D2(D1(y))};
  const double d2 = e.eval(std::span<const D2>(buf)).d.d;
  CHECK(d2 == doctest::Approx(2 * std::sin(y) + y * y * std::exp(x * y)).epsilon(1e-12));
}

TEST_CASE("variables resolve positionally") {
  auto e = parse_expression("a - b", {"a", "b"});
  CHECK(eval_at(e, {10.0, 4.0}) == doctest::Approx(6.0));
  auto swapped = parse_expression("a - b", {"b", "a"});
  CHECK(eval_at(swapped, {10.0, 4.0}) == doctest::Approx(-6.0));
}
