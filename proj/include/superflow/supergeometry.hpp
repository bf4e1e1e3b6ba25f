#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "superflow/expr.hpp"
#include "superflow/grassmann.hpp"
#include "superflow/scalar.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// A chart: named even coordinates, named odd coordinates, an evaluation
// mode, and optional box constraints on even coordinates describing the
// open set the chart covers.
// ---------------------------------------------------------------------------

class SuperDomain {
public:
  SuperDomain() = default;
  SuperDomain(std::vector<std::string> even, std::vector<std::string> odd,
              EvalMode mode);

  int even_dim() const { return static_cast<int>(even_.size()); }
  int odd_dim() const { return static_cast<int>(odd_.size()); }
  int coordinates() const { return even_dim() + odd_dim(); }
  EvalMode mode() const { return mode_; }

  const std::vector<std::string>& even_names() const { return even_; }
  const std::vector<std::string>& odd_names() const { return odd_; }

  // Coordinates are indexed even-first: j in [0, p) is even, [p, p+q) odd.
  const std::string& coordinate_name(int j) const;
  int coordinate_parity(int j) const;

  void set_box(const std::string& even_name, double lo, double hi);
  const std::map<std::string, std::pair<double, double>>& box() const {
    return box_;
  }

  // Is a body point inside the chart (within `margin` of the box)?  Real
  // mode tests the real part against the interval; complex mode bounds the
  // modulus by the larger endpoint.
  bool contains(std::span<const Scalar> body, double margin) const;

  bool same_as(const SuperDomain& other) const;

  SuperDomain with_extra_odd(const std::string& name) const;

private:
  std::vector<std::string> even_, odd_;
  EvalMode mode_ = EvalMode::Real;
  std::map<std::string, std::pair<double, double>> box_;
};

// ---------------------------------------------------------------------------
// A superfunction on a chart: a multivector over the chart's odd
// generators -- optionally extended by auxiliary odd generators (flow
// parameters tau, tau1, tau2) -- whose coefficients are expressions in the
// even coordinates.
// ---------------------------------------------------------------------------

class SuperFunction {
public:
  SuperFunction(SuperDomain domain, std::vector<std::string> aux,
                SymbolicValue value);

  static SuperFunction scalar(const SuperDomain& domain, ExprPtr e);
  static SuperFunction zero(const SuperDomain& domain);
  // Coordinate w_j as a superfunction (variable for even j, generator for
  // odd j).
  static SuperFunction coordinate(const SuperDomain& domain, int j);

  const SuperDomain& domain() const { return domain_; }
  const std::vector<std::string>& aux() const { return aux_; }
  const SymbolicValue& value() const { return value_; }
  int gens() const { return value_.generators(); }

  bool is_homogeneous(int parity) const { return value_.is_homogeneous(parity); }
  SuperFunction parity_part(int parity) const;

  // Throws unless every coefficient only uses declared even coordinates.
  void validate() const;

  // All generator names: odd coordinates first, then auxiliaries.
  std::vector<std::string> generator_names() const;

  std::string to_string() const;

  friend SuperFunction operator+(const SuperFunction& a, const SuperFunction& b);
  friend SuperFunction operator-(const SuperFunction& a, const SuperFunction& b);
  friend SuperFunction operator*(const SuperFunction& a, const SuperFunction& b);

private:
  void require_compatible(const SuperFunction& other) const;

  SuperDomain domain_;
  std::vector<std::string> aux_;
  SymbolicValue value_;
};

// ---------------------------------------------------------------------------
// A super vector field: one multivector-coefficient per coordinate,
//   X = sum_j X_j d/dw_j,
// with X_j a multivector over the chart's own odd generators (no
// auxiliaries) whose coefficients are expressions in the even coordinates.
// ---------------------------------------------------------------------------

class SuperVectorField {
public:
  SuperVectorField(SuperDomain domain, std::vector<SymbolicValue> components);
  static SuperVectorField zero(const SuperDomain& domain);

  const SuperDomain& domain() const { return domain_; }
  const SymbolicValue& component(int j) const;
  void set_component(int j, SymbolicValue v);

  // Parity of the term eta^J d/dw_j is |J| + |w_j| mod 2; the even part
  // keeps matching-parity terms, the odd part the rest.
  std::pair<SuperVectorField, SuperVectorField> parity_split() const;
  bool is_homogeneous(int parity) const;

  SuperFunction component_function(int j) const;  // X(w_j) as a superfunction
  std::string component_string(int j) const;

  SuperVectorField& operator+=(const SuperVectorField& rhs);
  friend SuperVectorField operator+(SuperVectorField a, const SuperVectorField& b) {
    a += b;
    return a;
  }
  friend SuperVectorField operator-(const SuperVectorField& a);
  friend SuperVectorField operator-(SuperVectorField a, const SuperVectorField& b) {
    a += -b;
    return a;
  }
  SuperVectorField scaled(const ExprPtr& c) const;
  SuperVectorField scaled(Scalar c) const;

private:
  SuperDomain domain_;
  std::vector<SymbolicValue> components_;
};

// X(f) = sum_j X_j * d f/d w_j with the left odd derivative; the
// multivector coefficient multiplies from the left.
SuperFunction apply_field(const SuperVectorField& X, const SuperFunction& f);

// Super Lie bracket [X, Y] = X Y - (-1)^{|X||Y|} Y X, extended bilinearly
// over the parity splits and re-expanded into component form by applying
// the composite to each coordinate function.
SuperVectorField super_bracket(const SuperVectorField& X,
                               const SuperVectorField& Y);

// Every component coefficient passes the zero test.
bool field_is_zero(const SuperVectorField& X, const ZeroTester& zt);

// ---------------------------------------------------------------------------
// Morphisms between charts, given by the pullbacks of the target
// coordinates.  The pullbacks may involve auxiliary odd generators on the
// source side (one shared list).
// ---------------------------------------------------------------------------

class MorphismData {
public:
  MorphismData(SuperDomain source, SuperDomain target,
               std::vector<std::string> aux,
               std::vector<SuperFunction> pullbacks);

  static MorphismData identity(const SuperDomain& domain);

  const SuperDomain& source() const { return source_; }
  const SuperDomain& target() const { return target_; }
  const std::vector<std::string>& aux() const { return aux_; }
  const SuperFunction& pullback(int j) const;
  int source_gens() const {
    return source_.odd_dim() + static_cast<int>(aux_.size());
  }
  bool is_identity() const;

private:
  SuperDomain source_, target_;
  std::vector<std::string> aux_;
  std::vector<SuperFunction> pullbacks_;
};

// psi*(a) for a scalar expression a in the target's even coordinates,
// developed as the finite Taylor sum over the nilpotent parts of the even
// pullbacks.  Result lives over the source generators (odd + aux).
SymbolicValue pullback_scalar(const MorphismData& psi, const ExprPtr& a);

// psi*(f) for a superfunction f on the target (without auxiliaries).
SuperFunction pullback_superfunction(const MorphismData& psi,
                                     const SuperFunction& f);

// Composite of outer: B -> C after inner: A -> B, as a morphism A -> C.
MorphismData compose(const MorphismData& outer, const MorphismData& inner);

// ---------------------------------------------------------------------------
// Derivative tables and the numeric Taylor pullback engine shared by the
// integrator and the action checks.
// ---------------------------------------------------------------------------

// Lazily computed partial derivatives d_gamma a of one expression with
// respect to an ordered variable list.
class DerivTable {
public:
  DerivTable() = default;
  DerivTable(ExprPtr base, std::vector<std::string> vars);

  const ExprPtr& base() const { return base_; }
  const ExprPtr& partial(std::span<const int> gamma);

private:
  ExprPtr base_;
  std::vector<std::string> vars_;
  std::map<std::vector<int>, ExprPtr> cache_;
};

// All multi-indices over `nvars` slots with total order exactly `total`,
// in lexicographic order.
std::vector<std::vector<int>> multi_indices(int nvars, int total);

// The Taylor development of a(psi*(y)) around the body point: body values
// bound in `body`, nilpotent parts per even coordinate in `nilpotents`
// (all over `gens` generators), truncated at total order `max_order`
// (nilpotency bound: live generators / 2).
GrassmannValue taylor_pullback(DerivTable& table, const VariableContext& body,
                               std::span<const GrassmannValue> nilpotents,
                               EvalMode mode, int max_order, int gens);

// A morphism sampled at one base point: numeric multivector pullbacks per
// target coordinate.  This is the evaluated counterpart of MorphismData
// and the value type of flow samples.
struct PointMorphism {
  const SuperDomain* target = nullptr;          // names + mode
  std::vector<GrassmannValue> even_pull;        // per target even coordinate
  std::vector<GrassmannValue> odd_pull;         // per target odd coordinate

  int gens() const;
  int max_order() const { return gens() / 2; }
  EvalMode mode() const { return target->mode(); }

  GrassmannValue pull_scalar(DerivTable& table) const;
  // f given as a multivector over the target's own odd generators.
  GrassmannValue pull_function(const SymbolicValue& f) const;
  GrassmannValue pull_function(const SuperFunction& f) const;

  // Derivative tables for pull_function coefficients, keyed by node
  // identity; purely a cache, hence mutable.
  mutable std::map<const Expr*, DerivTable> table_cache;
};

// ---------------------------------------------------------------------------
// Superfunction text format: the expression grammar extended so that
// identifiers naming odd coordinates (or auxiliary generators) become
// Grassmann factors, e.g. "x + 2*xi1*xi2" or "xi + tau".
// ---------------------------------------------------------------------------

SuperFunction parse_superfunction(const std::string& text,
                                  const SuperDomain& domain,
                                  std::vector<std::string> aux = {});

std::string to_string(const SymbolicValue& v,
                      std::span<const std::string> generator_names);

}  // namespace superflow
