#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "superflow/expr.hpp"
#include "superflow/grassmann.hpp"
#include "superflow/scalar.hpp"
#include "superflow/supergeometry.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// Exact multivariate polynomials with Scalar coefficients, used as an
// independent coefficient ring for the Lie-series oracle (expression trees
// would blow up under repeated differentiation and multiplication; the
// sparse exponent map stays small).
//
// A monomial is an exponent vector with trailing zeros stripped, so the
// representation is canonical independently of how many variables the
// surrounding computation uses.
// ---------------------------------------------------------------------------

class Poly {
public:
  Poly() = default;  // zero

  static Poly constant(Scalar c);
  static Poly variable(int index);  // 0-based

  bool is_zero() const { return terms_.empty(); }
  const std::map<std::vector<int>, Scalar>& terms() const { return terms_; }

  void add_term(std::vector<int> exponents, Scalar c);

  Poly operator-() const;
  Poly& operator+=(const Poly& rhs);
  friend Poly operator+(Poly lhs, const Poly& rhs) {
    lhs += rhs;
    return lhs;
  }
  friend Poly operator-(Poly lhs, const Poly& rhs);
  friend Poly operator*(const Poly& lhs, const Poly& rhs);

  Poly scaled(Scalar c) const;
  Poly differentiate(int var) const;
  Scalar eval(std::span<const Scalar> point) const;

private:
  static std::vector<int> trimmed(std::vector<int> e);

  std::map<std::vector<int>, Scalar> terms_;
};

// Conversion from an expression; throws EvalError when the expression is
// not a polynomial in the given variables (quotients by non-constants,
// negative/fractional powers, transcendental functions).
Poly poly_from_expr(const ExprPtr& e, std::span<const std::string> vars);

template <>
struct CoeffTraits<Poly> {
  static Poly zero() { return Poly(); }
  static bool is_zero(const Poly& c) { return c.is_zero(); }
  static Poly negate(const Poly& c) { return -c; }
};

using PolyValue = Multivector<Poly>;

// ---------------------------------------------------------------------------
// Super vector fields with polynomial coefficients: the minimal machinery
// to iterate X0 symbolically.  Components are indexed like the coordinates
// of the originating chart (even first), variables are the even
// coordinates in order.
// ---------------------------------------------------------------------------

struct PolyField {
  int even_dim = 0;
  int odd_dim = 0;
  std::vector<PolyValue> components;  // one per coordinate, over odd_dim gens

  static PolyField from_field(const SuperVectorField& X);  // see poly.cpp

  // Parity of eta^J d/dw_j is |J| + |w_j|; returns (even part, odd part).
  std::pair<PolyField, PolyField> parity_split() const;
};

// X(f) for a polynomial-coefficient field and a multivector over the same
// generators: even coordinates differentiate coefficients, odd ones apply
// the left derivative; the component multiplies from the left.
PolyValue apply_poly_field(const PolyField& X, const PolyValue& f);

GrassmannValue eval_poly_value(const PolyValue& v, std::span<const Scalar> x);

}  // namespace superflow
