#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "superflow/grassmann.hpp"
#include "superflow/scalar.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// Symbolic scalar expressions over named variables.
//
// Nodes are immutable and shared (a DAG, not a tree), so differentiation
// and substitution can memoize on node identity.  Construction goes through
// the make_* helpers, which apply light normalization only: flatten nested
// sums/products, fold constant subterms, and drop additive/multiplicative
// units.  No factoring, no expansion, and no folding that could hide a
// real-mode domain error (log, sqrt, division, fractional powers fold only
// when the operand is a safe constant).
// ---------------------------------------------------------------------------

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class NodeKind : std::uint8_t {
  Constant,
  Variable,
  Sum,       // n-ary, flattened
  Product,   // n-ary, flattened, any constant factor first
  Quotient,  // kids = {numerator, denominator}
  Power,     // kids = {base}; constant exponent stored on the node
  Call,      // kids = {argument}
};

enum class Func : std::uint8_t { Exp, Log, Sin, Cos, Sqrt };

class Expr {
public:
  NodeKind kind;
  Scalar value{};                // Constant
  std::string name;              // Variable
  std::vector<ExprPtr> kids;     // Sum/Product/Quotient/Power/Call
  Scalar exponent{};             // Power
  bool exponent_is_integer = false;
  Func func = Func::Exp;         // Call

  explicit Expr(NodeKind k) : kind(k) {}
};

ExprPtr make_constant(Scalar v);
ExprPtr make_variable(std::string name);
ExprPtr make_sum(std::vector<ExprPtr> terms);
ExprPtr make_product(std::vector<ExprPtr> factors);
ExprPtr make_quotient(ExprPtr num, ExprPtr den);
ExprPtr make_power(ExprPtr base, Scalar exponent, bool exponent_is_integer);
ExprPtr make_call(Func f, ExprPtr arg);

// Convenience arithmetic on shared expression handles.
ExprPtr operator+(const ExprPtr& a, const ExprPtr& b);
ExprPtr operator-(const ExprPtr& a, const ExprPtr& b);
ExprPtr operator-(const ExprPtr& a);
ExprPtr operator*(const ExprPtr& a, const ExprPtr& b);
ExprPtr operator/(const ExprPtr& a, const ExprPtr& b);

// True when the node is literally the constant 0 / 1.
bool is_constant_zero(const ExprPtr& e);
bool is_constant_one(const ExprPtr& e);

// ---------------------------------------------------------------------------
// Variable bindings: an ordered list of (name, value) with unique names.
// ---------------------------------------------------------------------------

class VariableContext {
public:
  VariableContext() = default;
  VariableContext(std::initializer_list<std::pair<std::string, Scalar>> init);

  void bind(const std::string& name, Scalar value);   // insert or overwrite
  const Scalar* find(const std::string& name) const;  // nullptr if absent
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Scalar>>& entries() const {
    return entries_;
  }

private:
  std::vector<std::pair<std::string, Scalar>> entries_;
};

// Evaluate at a point.  Real mode computes over the reals and throws
// EvalError on domain violations (log/sqrt/fractional powers of
// non-positive arguments, division by zero).  Complex mode uses principal
// branches throughout and only rejects division by exact zero.
Scalar evaluate(const ExprPtr& e, const VariableContext& ctx, EvalMode mode);

// Exact partial derivative with respect to `var`.  Shared subterms are
// differentiated once (memoized on node identity).
ExprPtr differentiate(const ExprPtr& e, const std::string& var);

// Capture-free simultaneous substitution of variables by expressions.
ExprPtr substitute(const ExprPtr& e,
                   const std::map<std::string, ExprPtr>& bindings);

// All variable names occurring in the expression, sorted, deduplicated.
std::vector<std::string> variables_of(const ExprPtr& e);

// Render to text.  parse(to_string(e)) evaluates identically to e.
std::string to_string(const ExprPtr& e);

// Parse the textual grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' exponent)?
//   base   := number | identifier | function '(' expr ')'
//           | '(' expr ')' | '-' base
// Exponents must fold to a constant; function names are
// exp/log/sin/cos/sqrt/neg.  Errors carry the byte offset of the failure.
ExprPtr parse_expression(const std::string& text);

// ---------------------------------------------------------------------------
// Probabilistic zero test: structural zero short-circuits, otherwise the
// expression is evaluated (with principal branches) at `points` random real
// points in [lo, hi]; draws that hit singularities are rediscarded.  An
// expression is "zero" when every sample stays below `tol` in modulus.
// ---------------------------------------------------------------------------

struct ZeroTester {
  std::uint64_t seed = 1729;
  int points = 50;
  double tol = 1e-10;
  double lo = 0.25;
  double hi = 1.25;

  bool is_zero(const ExprPtr& e, std::span<const std::string> vars) const;
};

template <>
struct CoeffTraits<ExprPtr> {
  static ExprPtr zero() { return make_constant(0.0); }
  static bool is_zero(const ExprPtr& c) { return is_constant_zero(c); }
  static ExprPtr negate(const ExprPtr& c) { return -c; }
};

using SymbolicValue = Multivector<ExprPtr>;

}  // namespace superflow
