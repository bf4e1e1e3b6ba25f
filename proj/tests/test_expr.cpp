#include <doctest.h>

#include <cmath>
#include <map>

#include "superflow/expr.hpp"

using namespace superflow;

namespace {

Scalar eval_at(const ExprPtr& e, double x, EvalMode mode = EvalMode::Real) {
  VariableContext ctx{{"x", Scalar(x)}};
  return evaluate(e, ctx, mode);
}

double real_at(const std::string& text, double x) {
  return eval_at(parse_expression(text), x).real();
}

}  // namespace

TEST_CASE("parsing and evaluation of the expression grammar") {
  CHECK(real_at("1 + 2*3", 0.0) == doctest::Approx(7.0));
  // '^' does not chain: a second exponent is trailing input
  CHECK_THROWS_AS(parse_expression("2^3^2"), ParseError);
  CHECK(real_at("(2^3)^2", 0.0) == doctest::Approx(64.0));
  // '-' lives inside base, so it binds tighter than '^'
  CHECK(real_at("-x^2", 3.0) == doctest::Approx(9.0));
  CHECK(real_at("-(x^2)", 3.0) == doctest::Approx(-9.0));
  CHECK(real_at("1 - x^2", 3.0) == doctest::Approx(-8.0));
  CHECK(real_at("(1+x)^3", 1.0) == doctest::Approx(8.0));
  CHECK(real_at("6/4/2", 0.0) == doctest::Approx(0.75));   // left assoc
  CHECK(real_at("exp(log(5))", 0.0) == doctest::Approx(5.0));
  CHECK(real_at("sin(x)^2 + cos(x)^2", 0.83) == doctest::Approx(1.0));
  CHECK(real_at("sqrt(x)*sqrt(x)", 1.7) == doctest::Approx(1.7));
  CHECK(real_at("2e-1 + 1.5E1", 0.0) == doctest::Approx(15.2));
}

TEST_CASE("parse errors carry byte offsets") {
  auto offset_of = [](const std::string& text) -> std::size_t {
    try {
      parse_expression(text);
    } catch (const ParseError& e) {
      return e.position();
    }
    FAIL("expected a parse error for: ", text);
    return 0;
  };
  CHECK(offset_of("1 +") == 3);
  CHECK(offset_of("(1+2") == 4);
  CHECK(offset_of("1 + * 2") == 4);
  CHECK(offset_of("sin 3") == 4);
  CHECK(offset_of("1 @ 2") == 2);
}

TEST_CASE("printing round trips through the parser") {
  const char* samples[] = {
      "x",
      "1 + x + x^2",
      "(1 + x)^3 / sqrt(x)",
      "exp(2*x) * sin(x) - cos(x/3)",
      "-x + 4/(x + 1)",
      "2^0.5 * x^(-2)",
  };
  for (const char* s : samples) {
    ExprPtr e = parse_expression(s);
    ExprPtr round = parse_expression(to_string(e));
    for (double x : {0.3, 0.7, 1.9}) {
      CHECK(eval_at(round, x).real() ==
            doctest::Approx(eval_at(e, x).real()).epsilon(1e-14));
    }
  }
}

TEST_CASE("differentiation rules") {
  auto check_derivative = [](const std::string& text,
                             const std::string& by_hand) {
    ExprPtr d = differentiate(parse_expression(text), "x");
    ExprPtr want = parse_expression(by_hand);
    for (double x : {0.4, 0.9, 1.6}) {
      CHECK(eval_at(d, x).real() ==
            doctest::Approx(eval_at(want, x).real()).epsilon(1e-13));
    }
  };
  check_derivative("x^2", "2*x");
  check_derivative("x^(-1)", "-1/x^2");
  check_derivative("exp(3*x)", "3*exp(3*x)");
  check_derivative("log(x)", "1/x");
  check_derivative("sin(2*x)", "2*cos(2*x)");
  check_derivative("cos(x)", "-sin(x)");
  check_derivative("sqrt(x)", "1/(2*sqrt(x))");
  check_derivative("x*sin(x)", "sin(x) + x*cos(x)");
  check_derivative("x/(1+x)", "1/(1+x)^2");
  check_derivative("exp(x)/x", "exp(x)/x - exp(x)/x^2");
  CHECK(is_constant_zero(differentiate(parse_expression("y + 3"), "x")));
}

TEST_CASE("substitution composes expressions") {
  ExprPtr e = parse_expression("x^2 + y");
  std::map<std::string, ExprPtr> bind{{"x", parse_expression("1 + t")},
                                      {"y", make_constant(2.0)}};
  ExprPtr s = substitute(e, bind);
  VariableContext ctx{{"t", Scalar(0.5)}};
  CHECK(evaluate(s, ctx, EvalMode::Real).real() ==
        doctest::Approx(1.5 * 1.5 + 2.0));
  // untouched variables survive
  ExprPtr t = substitute(parse_expression("x + z"), bind);
  VariableContext ctx2{{"t", Scalar(1.0)}, {"z", Scalar(4.0)}};
  CHECK(evaluate(t, ctx2, EvalMode::Real).real() == doctest::Approx(6.0));
}

TEST_CASE("variables_of reports each name once") {
  auto vars = variables_of(parse_expression("x*y + exp(x) - y/w"));
  std::vector<std::string> want{"w", "x", "y"};
  CHECK(vars == want);
  CHECK(variables_of(make_constant(3.0)).empty());
}

TEST_CASE("evaluation failures raise EvalError") {
  VariableContext empty;
  CHECK_THROWS_AS(evaluate(parse_expression("x"), empty, EvalMode::Real),
                  EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("1/x"), 0.0), EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("log(x)"), -2.0), EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("sqrt(x)"), -1.0), EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("x^0.5"), -1.0), EvalError);
  // complex mode admits the same points away from genuine poles
  CHECK(std::abs(eval_at(parse_expression("log(x)"), -2.0, EvalMode::Complex)) >
        0.0);
  CHECK(std::abs(eval_at(parse_expression("sqrt(x)"), -1.0, EvalMode::Complex) -
                 Scalar(0.0, 1.0)) < 1e-15);
}

TEST_CASE("integer powers of negative bases work in real mode") {
  CHECK(real_at("x^3", -2.0) == doctest::Approx(-8.0));
  CHECK(real_at("x^(-2)", -2.0) == doctest::Approx(0.25));
}

TEST_CASE("zero testing by randomized evaluation") {
  ZeroTester zt;
  std::vector<std::string> vars{"x", "y"};
  CHECK(zt.is_zero(parse_expression("0"), vars));
  CHECK(zt.is_zero(parse_expression("(x+y)^2 - x^2 - 2*x*y - y^2"), vars));
  CHECK(zt.is_zero(parse_expression("sin(x)^2 + cos(x)^2 - 1"), vars));
  CHECK(!zt.is_zero(parse_expression("x - y"), vars));
  CHECK(!zt.is_zero(parse_expression("1e-8"), vars));
  // unbound variables are rejected rather than silently failing
  CHECK_THROWS_AS(zt.is_zero(parse_expression("z"), vars), EvalError);
}

TEST_CASE("symbolic coefficients plug into the algebra") {
  SymbolicValue v = SymbolicValue::term(2, 0b01, parse_expression("x")) +
                    SymbolicValue::term(2, 0b10, parse_expression("x^2"));
  SymbolicValue prod = v * v;
  // xi1 xi2 coefficient: x*x^2 - x^2*x = 0 after evaluation
  VariableContext ctx{{"x", Scalar(0.7)}};
  CHECK(std::abs(evaluate(prod.coefficient(0b11), ctx, EvalMode::Real)) <
        1e-15);
}
