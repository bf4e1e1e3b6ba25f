#include "superflow/poly.hpp"

#include <algorithm>
#include <cmath>

namespace superflow {

std::vector<int> Poly::trimmed(std::vector<int> e) {
  while (!e.empty() && e.back() == 0) e.pop_back();
  return e;
}

Poly Poly::constant(Scalar c) {
  Poly p;
  p.add_term({}, c);
  return p;
}

Poly Poly::variable(int index) {
  if (index < 0) throw DimensionError("negative variable index");
  std::vector<int> e(index + 1, 0);
  e[index] = 1;
  Poly p;
  p.add_term(std::move(e), 1.0);
  return p;
}

void Poly::add_term(std::vector<int> exponents, Scalar c) {
  if (c == Scalar(0.0)) return;
  for (int k : exponents)
    if (k < 0) throw DimensionError("negative exponent in polynomial");
  std::vector<int> key = trimmed(std::move(exponents));
  auto it = terms_.find(key);
  if (it == terms_.end()) {
    terms_.emplace(std::move(key), c);
    return;
  }
  it->second += c;
  if (it->second == Scalar(0.0)) terms_.erase(it);
}

Poly Poly::operator-() const {
  Poly out;
  for (const auto& [e, c] : terms_) out.terms_.emplace(e, -c);
  return out;
}

Poly& Poly::operator+=(const Poly& rhs) {
  for (const auto& [e, c] : rhs.terms_) add_term(e, c);
  return *this;
}

Poly operator-(Poly lhs, const Poly& rhs) {
  for (const auto& [e, c] : rhs.terms()) lhs.add_term(e, -c);
  return lhs;
}

Poly operator*(const Poly& lhs, const Poly& rhs) {
  Poly out;
  for (const auto& [ea, ca] : lhs.terms()) {
    for (const auto& [eb, cb] : rhs.terms()) {
      std::vector<int> e(std::max(ea.size(), eb.size()), 0);
      for (std::size_t i = 0; i < ea.size(); ++i) e[i] += ea[i];
      for (std::size_t i = 0; i < eb.size(); ++i) e[i] += eb[i];
      out.add_term(std::move(e), ca * cb);
    }
  }
  return out;
}

Poly Poly::scaled(Scalar c) const {
  Poly out;
  if (c == Scalar(0.0)) return out;
  for (const auto& [e, k] : terms_) out.terms_.emplace(e, c * k);
  return out;
}

Poly Poly::differentiate(int var) const {
  if (var < 0) throw DimensionError("negative variable index");
  Poly out;
  const std::size_t v = static_cast<std::size_t>(var);
  for (const auto& [e, c] : terms_) {
    if (v >= e.size() || e[v] == 0) continue;
    std::vector<int> d = e;
    d[v] -= 1;
    out.add_term(std::move(d), c * static_cast<double>(e[v]));
  }
  return out;
}

Scalar Poly::eval(std::span<const Scalar> point) const {
  Scalar acc = 0.0;
  for (const auto& [e, c] : terms_) {
    if (e.size() > point.size())
      throw DimensionError("evaluation point has too few coordinates");
    Scalar m = c;
    for (std::size_t i = 0; i < e.size(); ++i)
      for (int k = 0; k < e[i]; ++k) m *= point[i];
    acc += m;
  }
  return acc;
}

Poly poly_from_expr(const ExprPtr& e, std::span<const std::string> vars) {
  if (!e) throw EvalError("null expression handle");
  switch (e->kind) {
    case NodeKind::Constant:
      return Poly::constant(e->value);
    case NodeKind::Variable: {
      auto it = std::find(vars.begin(), vars.end(), e->name);
      if (it == vars.end())
        throw EvalError("unknown variable '" + e->name + "' in polynomial");
      return Poly::variable(static_cast<int>(it - vars.begin()));
    }
    case NodeKind::Sum: {
      Poly acc;
      for (const auto& k : e->kids) acc += poly_from_expr(k, vars);
      return acc;
    }
    case NodeKind::Product: {
      Poly acc = Poly::constant(1.0);
      for (const auto& k : e->kids) acc = acc * poly_from_expr(k, vars);
      return acc;
    }
    case NodeKind::Quotient: {
      const ExprPtr& den = e->kids[1];
      if (den->kind != NodeKind::Constant || den->value == Scalar(0.0))
        throw EvalError("expression is not polynomial (division)");
      return poly_from_expr(e->kids[0], vars).scaled(Scalar(1.0) / den->value);
    }
    case NodeKind::Power: {
      if (!e->exponent_is_integer || e->exponent.real() < 0.0)
        throw EvalError("expression is not polynomial (power)");
      int k = static_cast<int>(std::rint(e->exponent.real()));
      Poly base = poly_from_expr(e->kids[0], vars);
      Poly acc = Poly::constant(1.0);
      for (int i = 0; i < k; ++i) acc = acc * base;
      return acc;
    }
    case NodeKind::Call:
      throw EvalError("expression is not polynomial (function call)");
  }
  throw EvalError("corrupt expression node");
}

// ---------------------------------------------------------------------------
// Polynomial-coefficient fields
// ---------------------------------------------------------------------------

PolyField PolyField::from_field(const SuperVectorField& X) {
  PolyField out;
  out.even_dim = X.domain().even_dim();
  out.odd_dim = X.domain().odd_dim();
  const auto& vars = X.domain().even_names();
  for (int j = 0; j < X.domain().coordinates(); ++j) {
    PolyValue comp(out.odd_dim);
    for (const auto& [m, c] : X.component(j).terms())
      comp.add_term(m, poly_from_expr(c, vars));
    out.components.push_back(std::move(comp));
  }
  return out;
}

std::pair<PolyField, PolyField> PolyField::parity_split() const {
  PolyField even = *this;
  PolyField odd = *this;
  for (std::size_t j = 0; j < components.size(); ++j) {
    int pj = static_cast<int>(j) < even_dim ? 0 : 1;
    even.components[j] = components[j].parity_part(pj);
    odd.components[j] = components[j].parity_part(1 - pj);
  }
  return {std::move(even), std::move(odd)};
}

PolyValue apply_poly_field(const PolyField& X, const PolyValue& f) {
  PolyValue acc(f.generators());
  for (std::size_t j = 0; j < X.components.size(); ++j) {
    const PolyValue& coeff = X.components[j];
    if (coeff.is_zero()) continue;
    PolyValue df(f.generators());
    if (static_cast<int>(j) < X.even_dim) {
      df = f.map_coefficients(
          [&](const Poly& c) { return c.differentiate(static_cast<int>(j)); });
    } else {
      df = odd_partial(f, static_cast<int>(j) - X.even_dim + 1);
    }
    if (df.is_zero()) continue;
    acc += coeff * df;
  }
  return acc;
}

GrassmannValue eval_poly_value(const PolyValue& v, std::span<const Scalar> x) {
  GrassmannValue out(v.generators());
  for (const auto& [m, c] : v.terms()) out.add_term(m, c.eval(x));
  return out;
}

}  // namespace superflow
