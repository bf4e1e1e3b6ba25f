#include "superflow/supergeometry.hpp"

#include <algorithm>
#include <set>

#include "superflow/lexer.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// SuperDomain
// ---------------------------------------------------------------------------

SuperDomain::SuperDomain(std::vector<std::string> even,
                         std::vector<std::string> odd, EvalMode mode)
    : even_(std::move(even)), odd_(std::move(odd)), mode_(mode) {
  if (odd_dim() > kMaxGenerators)
    throw DimensionError("too many odd coordinates");
  std::set<std::string> seen;
  for (const auto& n : even_)
    if (n.empty() || !seen.insert(n).second)
      throw DimensionError("coordinate names must be distinct and non-empty");
  for (const auto& n : odd_)
    if (n.empty() || !seen.insert(n).second)
      throw DimensionError("coordinate names must be distinct and non-empty");
}

const std::string& SuperDomain::coordinate_name(int j) const {
  if (j < 0 || j >= coordinates())
    throw DimensionError("coordinate index out of range");
  return j < even_dim() ? even_[j] : odd_[j - even_dim()];
}

int SuperDomain::coordinate_parity(int j) const {
  if (j < 0 || j >= coordinates())
    throw DimensionError("coordinate index out of range");
  return j < even_dim() ? 0 : 1;
}

void SuperDomain::set_box(const std::string& even_name, double lo, double hi) {
  if (std::find(even_.begin(), even_.end(), even_name) == even_.end())
    throw DimensionError("box constraint on unknown even coordinate '" +
                         even_name + "'");
  if (!(lo < hi)) throw DimensionError("box interval must be non-degenerate");
  box_[even_name] = {lo, hi};
}

bool SuperDomain::contains(std::span<const Scalar> body, double margin) const {
  if (static_cast<int>(body.size()) != even_dim())
    throw DimensionError("body point has wrong dimension");
  for (int i = 0; i < even_dim(); ++i) {
    auto it = box_.find(even_[i]);
    if (it == box_.end()) continue;
    auto [lo, hi] = it->second;
    if (mode_ == EvalMode::Real) {
      double v = body[i].real();
      if (v < lo - margin || v > hi + margin) return false;
    } else {
      double bound = std::max(std::abs(lo), std::abs(hi));
      if (std::abs(body[i]) > bound + margin) return false;
    }
  }
  return true;
}

bool SuperDomain::same_as(const SuperDomain& other) const {
  return even_ == other.even_ && odd_ == other.odd_ && mode_ == other.mode_;
}

SuperDomain SuperDomain::with_extra_odd(const std::string& name) const {
  std::vector<std::string> odd = odd_;
  odd.push_back(name);
  SuperDomain out(even_, std::move(odd), mode_);
  out.box_ = box_;
  return out;
}

// ---------------------------------------------------------------------------
// SuperFunction
// ---------------------------------------------------------------------------

SuperFunction::SuperFunction(SuperDomain domain, std::vector<std::string> aux,
                             SymbolicValue value)
    : domain_(std::move(domain)), aux_(std::move(aux)), value_(std::move(value)) {
  if (value_.generators() !=
      domain_.odd_dim() + static_cast<int>(aux_.size()))
    throw DimensionError(
        "superfunction generator count must equal odd dimension plus "
        "auxiliaries");
}

SuperFunction SuperFunction::scalar(const SuperDomain& domain, ExprPtr e) {
  return SuperFunction(domain, {},
                       SymbolicValue::constant(domain.odd_dim(), std::move(e)));
}

SuperFunction SuperFunction::zero(const SuperDomain& domain) {
  return SuperFunction(domain, {}, SymbolicValue(domain.odd_dim()));
}

SuperFunction SuperFunction::coordinate(const SuperDomain& domain, int j) {
  if (domain.coordinate_parity(j) == 0)
    return scalar(domain, make_variable(domain.coordinate_name(j)));
  int s = j - domain.even_dim() + 1;
  return SuperFunction(domain, {},
                       SymbolicValue::generator(domain.odd_dim(), s,
                                                make_constant(1.0)));
}

SuperFunction SuperFunction::parity_part(int parity) const {
  return SuperFunction(domain_, aux_, value_.parity_part(parity));
}

void SuperFunction::validate() const {
  for (const auto& [m, c] : value_.terms()) {
    for (const auto& name : variables_of(c)) {
      const auto& evens = domain_.even_names();
      if (std::find(evens.begin(), evens.end(), name) == evens.end())
        throw DimensionError("coefficient uses undeclared variable '" + name +
                             "'");
    }
  }
}

std::vector<std::string> SuperFunction::generator_names() const {
  std::vector<std::string> names = domain_.odd_names();
  names.insert(names.end(), aux_.begin(), aux_.end());
  return names;
}

std::string SuperFunction::to_string() const {
  return superflow::to_string(value_, generator_names());
}

void SuperFunction::require_compatible(const SuperFunction& other) const {
  if (!domain_.same_as(other.domain_) || aux_ != other.aux_)
    throw DimensionError("superfunctions live on different charts");
}

SuperFunction operator+(const SuperFunction& a, const SuperFunction& b) {
  a.require_compatible(b);
  return SuperFunction(a.domain_, a.aux_, a.value_ + b.value_);
}

SuperFunction operator-(const SuperFunction& a, const SuperFunction& b) {
  a.require_compatible(b);
  return SuperFunction(a.domain_, a.aux_, a.value_ - b.value_);
}

SuperFunction operator*(const SuperFunction& a, const SuperFunction& b) {
  a.require_compatible(b);
  return SuperFunction(a.domain_, a.aux_, a.value_ * b.value_);
}

// ---------------------------------------------------------------------------
// SuperVectorField
// ---------------------------------------------------------------------------

SuperVectorField::SuperVectorField(SuperDomain domain,
                                   std::vector<SymbolicValue> components)
    : domain_(std::move(domain)), components_(std::move(components)) {
  if (static_cast<int>(components_.size()) != domain_.coordinates())
    throw DimensionError("field needs one component per coordinate");
  for (const auto& c : components_)
    if (c.generators() != domain_.odd_dim())
      throw DimensionError("field component over the wrong algebra");
}

SuperVectorField SuperVectorField::zero(const SuperDomain& domain) {
  std::vector<SymbolicValue> comps(
      domain.coordinates(), SymbolicValue(domain.odd_dim()));
  return SuperVectorField(domain, std::move(comps));
}

const SymbolicValue& SuperVectorField::component(int j) const {
  if (j < 0 || j >= static_cast<int>(components_.size()))
    throw DimensionError("component index out of range");
  return components_[j];
}

void SuperVectorField::set_component(int j, SymbolicValue v) {
  if (j < 0 || j >= static_cast<int>(components_.size()))
    throw DimensionError("component index out of range");
  if (v.generators() != domain_.odd_dim())
    throw DimensionError("field component over the wrong algebra");
  components_[j] = std::move(v);
}

std::pair<SuperVectorField, SuperVectorField> SuperVectorField::parity_split()
    const {
  SuperVectorField even = zero(domain_);
  SuperVectorField odd = zero(domain_);
  for (int j = 0; j < domain_.coordinates(); ++j) {
    int pj = domain_.coordinate_parity(j);
    even.components_[j] = components_[j].parity_part(pj);
    odd.components_[j] = components_[j].parity_part(1 - pj);
  }
  return {std::move(even), std::move(odd)};
}

bool SuperVectorField::is_homogeneous(int parity) const {
  for (int j = 0; j < domain_.coordinates(); ++j) {
    int want = (domain_.coordinate_parity(j) + parity) & 1;
    if (!components_[j].is_homogeneous(want)) return false;
  }
  return true;
}

SuperFunction SuperVectorField::component_function(int j) const {
  return SuperFunction(domain_, {}, component(j));
}

std::string SuperVectorField::component_string(int j) const {
  return to_string(component(j), domain_.odd_names());
}

SuperVectorField& SuperVectorField::operator+=(const SuperVectorField& rhs) {
  if (!domain_.same_as(rhs.domain_))
    throw DimensionError("fields live on different charts");
  for (std::size_t j = 0; j < components_.size(); ++j)
    components_[j] += rhs.components_[j];
  return *this;
}

SuperVectorField operator-(const SuperVectorField& a) {
  SuperVectorField out = a;
  for (int j = 0; j < a.domain().coordinates(); ++j)
    out.set_component(j, -a.component(j));
  return out;
}

SuperVectorField SuperVectorField::scaled(const ExprPtr& c) const {
  SuperVectorField out = *this;
  for (auto& comp : out.components_) comp = comp.scaled(c);
  return out;
}

SuperVectorField SuperVectorField::scaled(Scalar c) const {
  return scaled(make_constant(c));
}

SuperFunction apply_field(const SuperVectorField& X, const SuperFunction& f) {
  if (!X.domain().same_as(f.domain()))
    throw DimensionError("field and function live on different charts");
  const int extra = static_cast<int>(f.aux().size());
  SymbolicValue acc(f.gens());
  for (int j = 0; j < X.domain().coordinates(); ++j) {
    const SymbolicValue& coeff = X.component(j);
    if (coeff.is_zero()) continue;
    SymbolicValue df(f.gens());
    if (X.domain().coordinate_parity(j) == 0) {
      const std::string& var = X.domain().coordinate_name(j);
      df = f.value().map_coefficients(
          [&](const ExprPtr& c) { return differentiate(c, var); });
    } else {
      df = odd_partial(f.value(), j - X.domain().even_dim() + 1);
    }
    if (df.is_zero()) continue;
    acc += coeff.adjoin_generators(extra) * df;
  }
  return SuperFunction(f.domain(), f.aux(), std::move(acc));
}

SuperVectorField super_bracket(const SuperVectorField& X,
                               const SuperVectorField& Y) {
  if (!X.domain().same_as(Y.domain()))
    throw DimensionError("fields live on different charts");
  const SuperDomain& dom = X.domain();
  auto [x0, x1] = X.parity_split();
  auto [y0, y1] = Y.parity_split();
  const SuperVectorField* xs[2] = {&x0, &x1};
  const SuperVectorField* ys[2] = {&y0, &y1};

  SuperVectorField out = SuperVectorField::zero(dom);
  for (int pa = 0; pa < 2; ++pa) {
    for (int pb = 0; pb < 2; ++pb) {
      const SuperVectorField& a = *xs[pa];
      const SuperVectorField& b = *ys[pb];
      for (int j = 0; j < dom.coordinates(); ++j) {
        SuperFunction ab = apply_field(a, apply_field(b, SuperFunction::coordinate(dom, j)));
        SuperFunction ba = apply_field(b, apply_field(a, SuperFunction::coordinate(dom, j)));
        SymbolicValue comp = (pa == 1 && pb == 1) ? ab.value() + ba.value()
                                                  : ab.value() - ba.value();
        out.set_component(j, out.component(j) + comp);
      }
    }
  }
  return out;
}

bool field_is_zero(const SuperVectorField& X, const ZeroTester& zt) {
  for (int j = 0; j < X.domain().coordinates(); ++j) {
    for (const auto& [m, c] : X.component(j).terms()) {
      if (!zt.is_zero(c, X.domain().even_names())) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// MorphismData
// ---------------------------------------------------------------------------

MorphismData::MorphismData(SuperDomain source, SuperDomain target,
                           std::vector<std::string> aux,
                           std::vector<SuperFunction> pullbacks)
    : source_(std::move(source)),
      target_(std::move(target)),
      aux_(std::move(aux)),
      pullbacks_(std::move(pullbacks)) {
  if (static_cast<int>(pullbacks_.size()) != target_.coordinates())
    throw DimensionError("morphism needs one pullback per target coordinate");
  for (int j = 0; j < target_.coordinates(); ++j) {
    const SuperFunction& pb = pullbacks_[j];
    if (!pb.domain().same_as(source_) || pb.aux() != aux_)
      throw DimensionError("pullback lives on the wrong source chart");
    if (!pb.is_homogeneous(target_.coordinate_parity(j)))
      throw DimensionError("pullback parity does not match coordinate '" +
                           target_.coordinate_name(j) + "'");
    pb.validate();
  }
}

MorphismData MorphismData::identity(const SuperDomain& domain) {
  std::vector<SuperFunction> pulls;
  pulls.reserve(domain.coordinates());
  for (int j = 0; j < domain.coordinates(); ++j)
    pulls.push_back(SuperFunction::coordinate(domain, j));
  return MorphismData(domain, domain, {}, std::move(pulls));
}

const SuperFunction& MorphismData::pullback(int j) const {
  if (j < 0 || j >= static_cast<int>(pullbacks_.size()))
    throw DimensionError("pullback index out of range");
  return pullbacks_[j];
}

bool MorphismData::is_identity() const {
  if (!source_.same_as(target_) || !aux_.empty()) return false;
  for (int j = 0; j < target_.coordinates(); ++j) {
    const SymbolicValue& v = pullbacks_[j].value();
    if (v.terms().size() != 1) return false;
    const auto& [m, c] = *v.terms().begin();
    if (target_.coordinate_parity(j) == 0) {
      if (m != 0 || c->kind != NodeKind::Variable ||
          c->name != target_.coordinate_name(j))
        return false;
    } else {
      Mono want = Mono(1) << (j - target_.even_dim());
      if (m != want || !is_constant_one(c)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Symbolic Taylor pullback
// ---------------------------------------------------------------------------

SymbolicValue pullback_scalar(const MorphismData& psi, const ExprPtr& a) {
  const SuperDomain& target = psi.target();
  const int gens = psi.source_gens();
  const int p = target.even_dim();

  std::map<std::string, ExprPtr> body;
  std::vector<SymbolicValue> nilpotents;
  nilpotents.reserve(p);
  bool any_nilpotent = false;
  for (int mu = 0; mu < p; ++mu) {
    const SymbolicValue& v = psi.pullback(mu).value();
    body[target.even_names()[mu]] = v.coefficient(0);
    SymbolicValue nil(gens);
    for (const auto& [m, c] : v.terms())
      if (m != 0) nil.add_term(m, c);
    any_nilpotent = any_nilpotent || !nil.is_zero();
    nilpotents.push_back(std::move(nil));
  }

  SymbolicValue out =
      SymbolicValue::constant(gens, substitute(a, body));
  if (!any_nilpotent) return out;

  DerivTable table(a, target.even_names());
  const int max_order = gens / 2;
  for (int d = 1; d <= max_order; ++d) {
    for (const auto& gamma : multi_indices(p, d)) {
      SymbolicValue prod = SymbolicValue::constant(gens, make_constant(1.0));
      double fact = 1.0;
      for (int mu = 0; mu < p && !prod.is_zero(); ++mu) {
        for (int k = 1; k <= gamma[mu]; ++k) {
          prod = prod * nilpotents[mu];
          fact *= k;
          if (prod.is_zero()) break;
        }
      }
      if (prod.is_zero()) continue;
      const ExprPtr& pd = table.partial(gamma);
      if (is_constant_zero(pd)) continue;
      ExprPtr c = make_constant(1.0 / fact) * substitute(pd, body);
      out += prod.scaled(c);
    }
  }
  return out;
}

SuperFunction pullback_superfunction(const MorphismData& psi,
                                     const SuperFunction& f) {
  if (!f.aux().empty())
    throw DimensionError("cannot pull back a function with auxiliary generators");
  if (!f.domain().same_as(psi.target()))
    throw DimensionError("function does not live on the morphism's target");
  const int gens = psi.source_gens();
  const int p = psi.target().even_dim();
  SymbolicValue out(gens);
  for (const auto& [m, c] : f.value().terms()) {
    SymbolicValue val = pullback_scalar(psi, c);
    Mono rest = m;
    while (rest && !val.is_zero()) {
      int s = std::countr_zero(rest);
      rest &= rest - 1;
      val = val * psi.pullback(p + s).value();
    }
    out += val;
  }
  return SuperFunction(psi.source(), psi.aux(), std::move(out));
}

MorphismData compose(const MorphismData& outer, const MorphismData& inner) {
  if (!inner.target().same_as(outer.source()))
    throw DimensionError("morphism chaining mismatch");
  if (!outer.aux().empty())
    throw DimensionError("outer morphism must not carry auxiliary generators");
  std::vector<SuperFunction> pulls;
  pulls.reserve(outer.target().coordinates());
  for (int j = 0; j < outer.target().coordinates(); ++j)
    pulls.push_back(pullback_superfunction(inner, outer.pullback(j)));
  return MorphismData(inner.source(), outer.target(), inner.aux(),
                      std::move(pulls));
}

// ---------------------------------------------------------------------------
// Derivative tables and the numeric Taylor engine
// ---------------------------------------------------------------------------

DerivTable::DerivTable(ExprPtr base, std::vector<std::string> vars)
    : base_(std::move(base)), vars_(std::move(vars)) {
  cache_[std::vector<int>(vars_.size(), 0)] = base_;
}

const ExprPtr& DerivTable::partial(std::span<const int> gamma) {
  if (gamma.size() != vars_.size())
    throw DimensionError("multi-index has wrong length");
  std::vector<int> key(gamma.begin(), gamma.end());
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  // Reduce the first positive slot by one and differentiate that result.
  std::vector<int> prev = key;
  std::size_t mu = 0;
  while (mu < prev.size() && prev[mu] == 0) ++mu;
  if (mu == prev.size()) throw DimensionError("negative multi-index");
  --prev[mu];
  ExprPtr lower = partial(prev);
  auto [pos, inserted] =
      cache_.emplace(std::move(key), differentiate(lower, vars_[mu]));
  return pos->second;
}

std::vector<std::vector<int>> multi_indices(int nvars, int total) {
  std::vector<std::vector<int>> out;
  if (nvars == 0) {
    if (total == 0) out.push_back({});
    return out;
  }
  std::vector<int> current(nvars, 0);
  // Depth-first over slots, assigning what remains to the last slot.
  auto rec = [&](auto&& self, int slot, int remaining) -> void {
    if (slot == nvars - 1) {
      current[slot] = remaining;
      out.push_back(current);
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      current[slot] = k;
      self(self, slot + 1, remaining - k);
    }
  };
  rec(rec, 0, total);
  return out;
}

GrassmannValue taylor_pullback(DerivTable& table, const VariableContext& body,
                               std::span<const GrassmannValue> nilpotents,
                               EvalMode mode, int max_order, int gens) {
  const int p = static_cast<int>(nilpotents.size());
  std::vector<int> zero(p, 0);
  GrassmannValue out = GrassmannValue::constant(
      gens, evaluate(table.partial(zero), body, mode));
  bool any = false;
  for (const auto& n : nilpotents) any = any || !n.is_zero();
  if (!any) return out;

  for (int d = 1; d <= max_order; ++d) {
    for (const auto& gamma : multi_indices(p, d)) {
      GrassmannValue prod = GrassmannValue::constant(gens, 1.0);
      double fact = 1.0;
      for (int mu = 0; mu < p && !prod.is_zero(); ++mu) {
        for (int k = 1; k <= gamma[mu]; ++k) {
          prod = prod * nilpotents[mu];
          fact *= k;
          if (prod.is_zero()) break;
        }
      }
      if (prod.is_zero()) continue;
      const ExprPtr& pd = table.partial(gamma);
      if (is_constant_zero(pd)) continue;
      out += prod.scaled(evaluate(pd, body, mode) / fact);
    }
  }
  return out;
}

int PointMorphism::gens() const {
  if (!even_pull.empty()) return even_pull.front().generators();
  if (!odd_pull.empty()) return odd_pull.front().generators();
  return 0;
}

GrassmannValue PointMorphism::pull_scalar(DerivTable& table) const {
  VariableContext body;
  std::vector<GrassmannValue> nilpotents;
  nilpotents.reserve(even_pull.size());
  for (std::size_t mu = 0; mu < even_pull.size(); ++mu) {
    body.bind(target->even_names()[mu], even_pull[mu].coefficient(0));
    GrassmannValue nil(gens());
    for (const auto& [m, c] : even_pull[mu].terms())
      if (m != 0) nil.add_term(m, c);
    nilpotents.push_back(std::move(nil));
  }
  return taylor_pullback(table, body, nilpotents, mode(), max_order(), gens());
}

GrassmannValue PointMorphism::pull_function(const SymbolicValue& f) const {
  GrassmannValue out(gens());
  for (const auto& [m, c] : f.terms()) {
    auto it = table_cache.find(c.get());
    if (it == table_cache.end())
      it = table_cache.emplace(c.get(), DerivTable(c, target->even_names()))
               .first;
    GrassmannValue val = pull_scalar(it->second);
    Mono rest = m;
    while (rest && !val.is_zero()) {
      int s = std::countr_zero(rest);
      rest &= rest - 1;
      val = val * odd_pull[static_cast<std::size_t>(s)];
    }
    out += val;
  }
  return out;
}

GrassmannValue PointMorphism::pull_function(const SuperFunction& f) const {
  if (!f.aux().empty())
    throw DimensionError("cannot pull back a function with auxiliary generators");
  return pull_function(f.value());
}

// ---------------------------------------------------------------------------
// Superfunction text format
// ---------------------------------------------------------------------------

namespace {

using detail::Lexer;
using detail::Token;

class SuperParser {
public:
  SuperParser(const std::string& src, const SuperDomain& dom,
              std::vector<std::string> aux)
      : lex_(src), dom_(dom), aux_(std::move(aux)) {
    gens_ = dom_.odd_dim() + static_cast<int>(aux_.size());
    for (int s = 0; s < dom_.odd_dim(); ++s)
      odd_index_[dom_.odd_names()[s]] = s + 1;
    for (std::size_t k = 0; k < aux_.size(); ++k) {
      if (odd_index_.count(aux_[k]))
        throw DimensionError("auxiliary generator name collides with a coordinate");
      odd_index_[aux_[k]] = dom_.odd_dim() + static_cast<int>(k) + 1;
    }
  }

  SuperFunction run() {
    SymbolicValue v = expr();
    if (lex_.peek().type != Token::Type::End)
      lex_.fail("unexpected trailing input");
    return SuperFunction(dom_, aux_, std::move(v));
  }

private:
  SymbolicValue from_expr(ExprPtr e) {
    return SymbolicValue::constant(gens_, std::move(e));
  }

  static bool is_pure_scalar(const SymbolicValue& v) {
    for (const auto& [m, c] : v.terms())
      if (m != 0) return false;
    return true;
  }

  SymbolicValue expr() {
    SymbolicValue acc = term();
    while (true) {
      Token::Type t = lex_.peek().type;
      if (t == Token::Type::Plus) {
        lex_.take();
        acc += term();
      } else if (t == Token::Type::Minus) {
        lex_.take();
        acc -= term();
      } else {
        return acc;
      }
    }
  }

  SymbolicValue term() {
    SymbolicValue acc = factor();
    while (true) {
      Token::Type t = lex_.peek().type;
      if (t == Token::Type::Star) {
        lex_.take();
        acc = acc * factor();
      } else if (t == Token::Type::Slash) {
        std::size_t at = lex_.peek().pos;
        lex_.take();
        SymbolicValue den = factor();
        if (!is_pure_scalar(den))
          throw ParseError("division by an element with odd part", at);
        ExprPtr d = den.coefficient(0);
        acc = acc.map_coefficients(
            [&](const ExprPtr& c) { return make_quotient(c, d); });
      } else {
        return acc;
      }
    }
  }

  SymbolicValue factor() {
    SymbolicValue b = base();
    if (lex_.peek().type != Token::Type::Caret) return b;
    lex_.take();
    bool neg = false;
    if (lex_.peek().type == Token::Type::Minus) {
      lex_.take();
      neg = true;
    }
    std::size_t at = lex_.peek().pos;
    SymbolicValue e = base();
    if (!is_pure_scalar(e) || e.coefficient(0)->kind != NodeKind::Constant)
      throw ParseError("exponent must be a constant", at);
    Scalar ex = e.coefficient(0)->value;
    if (neg) ex = -ex;
    bool integral = ex.imag() == 0.0 && ex.real() == std::rint(ex.real()) &&
                    std::abs(ex.real()) <= 1e9;
    if (is_pure_scalar(b))
      return from_expr(make_power(b.coefficient(0), ex, integral));
    if (!integral || ex.real() < 0.0)
      throw ParseError("exponent on an odd element must be a non-negative integer",
                       at);
    SymbolicValue acc = from_expr(make_constant(1.0));
    for (int k = static_cast<int>(ex.real()); k > 0; --k) acc = acc * b;
    return acc;
  }

  SymbolicValue base() {
    Token t = lex_.peek();
    switch (t.type) {
      case Token::Type::Number:
        lex_.take();
        return from_expr(make_constant(t.number));
      case Token::Type::Minus:
        lex_.take();
        return -base();
      case Token::Type::LParen: {
        lex_.take();
        SymbolicValue e = expr();
        expect_rparen();
        return e;
      }
      case Token::Type::Ident: {
        lex_.take();
        if (lex_.peek().type == Token::Type::LParen)
          return call(t);
        const auto& evens = dom_.even_names();
        if (std::find(evens.begin(), evens.end(), t.text) != evens.end())
          return from_expr(make_variable(t.text));
        auto it = odd_index_.find(t.text);
        if (it != odd_index_.end())
          return SymbolicValue::generator(gens_, it->second, make_constant(1.0));
        throw ParseError("unknown identifier '" + t.text + "'", t.pos);
      }
      default:
        lex_.fail("expected a number, identifier, or '('");
    }
  }

  SymbolicValue call(const Token& name) {
    bool negate = false;
    Func f;
    if (name.text == "exp") f = Func::Exp;
    else if (name.text == "log") f = Func::Log;
    else if (name.text == "sin") f = Func::Sin;
    else if (name.text == "cos") f = Func::Cos;
    else if (name.text == "sqrt") f = Func::Sqrt;
    else if (name.text == "neg") { f = Func::Exp; negate = true; }
    else throw ParseError("unknown function '" + name.text + "'", name.pos);
    lex_.take();  // '('
    SymbolicValue arg = expr();
    expect_rparen();
    if (negate) return -arg;
    if (!is_pure_scalar(arg))
      throw ParseError("transcendental function of an element with odd part",
                       name.pos);
    return from_expr(make_call(f, arg.coefficient(0)));
  }

  void expect_rparen() {
    if (lex_.peek().type != Token::Type::RParen) lex_.fail("expected ')'");
    lex_.take();
  }

  Lexer lex_;
  const SuperDomain& dom_;
  std::vector<std::string> aux_;
  std::map<std::string, int> odd_index_;
  int gens_ = 0;
};

}  // namespace

SuperFunction parse_superfunction(const std::string& text,
                                  const SuperDomain& domain,
                                  std::vector<std::string> aux) {
  return SuperParser(text, domain, std::move(aux)).run();
}

std::string to_string(const SymbolicValue& v,
                      std::span<const std::string> generator_names) {
  if (v.is_zero()) return "0";
  std::string out;
  for (const auto& [m, c] : v.terms()) {
    std::string part;
    if (m == 0) {
      part = to_string(c);
    } else {
      std::string mono = mono_to_string(m, generator_names);
      if (is_constant_one(c)) {
        part = mono;
      } else if (c->kind == NodeKind::Constant && c->value == Scalar(-1.0)) {
        part = "-" + mono;
      } else {
        std::string cs = to_string(c);
        if (c->kind == NodeKind::Sum) cs = "(" + cs + ")";
        part = cs + "*" + mono;
      }
    }
    if (out.empty()) {
      out = part;
    } else if (!part.empty() && part.front() == '-') {
      out += " - " + part.substr(1);
    } else {
      out += " + " + part;
    }
  }
  return out;
}

}  // namespace superflow
