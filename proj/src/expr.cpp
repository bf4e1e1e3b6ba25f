#include "superflow/expr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <unordered_map>

#include "superflow/lexer.hpp"

namespace superflow {

namespace {

bool is_constant(const ExprPtr& e) { return e->kind == NodeKind::Constant; }

bool is_real_constant(const ExprPtr& e, double v) {
  return is_constant(e) && e->value == Scalar(v);
}

// Folding a call/power/quotient of a constant is allowed only when it is
// value-safe: the same inputs must not raise a real-mode domain error, and
// the folded value must be real so both modes agree.
bool foldable_positive(const ExprPtr& e) {
  return is_constant(e) && e->value.imag() == 0.0 && e->value.real() > 0.0;
}

ExprPtr raw(NodeKind k) { return std::make_shared<Expr>(k); }

}  // namespace

ExprPtr make_constant(Scalar v) {
  auto n = std::make_shared<Expr>(NodeKind::Constant);
  n->value = v;
  return n;
}

ExprPtr make_variable(std::string name) {
  auto n = std::make_shared<Expr>(NodeKind::Variable);
  n->name = std::move(name);
  return n;
}

ExprPtr make_sum(std::vector<ExprPtr> terms) {
  std::vector<ExprPtr> kids;
  Scalar c = 0.0;
  for (auto& t : terms) {
    if (!t) throw EvalError("null expression handle");
    if (t->kind == NodeKind::Sum) {
      for (const auto& k : t->kids) {
        if (is_constant(k))
          c += k->value;
        else
          kids.push_back(k);
      }
    } else if (is_constant(t)) {
      c += t->value;
    } else {
      kids.push_back(std::move(t));
    }
  }
  if (c != Scalar(0.0) || kids.empty()) kids.insert(kids.begin(), make_constant(c));
  if (kids.size() == 1) return kids.front();
  auto n = raw(NodeKind::Sum);
  const_cast<Expr*>(n.get())->kids = std::move(kids);
  return n;
}

ExprPtr make_product(std::vector<ExprPtr> factors) {
  std::vector<ExprPtr> kids;
  Scalar c = 1.0;
  for (auto& f : factors) {
    if (!f) throw EvalError("null expression handle");
    if (f->kind == NodeKind::Product) {
      for (const auto& k : f->kids) {
        if (is_constant(k))
          c *= k->value;
        else
          kids.push_back(k);
      }
    } else if (is_constant(f)) {
      c *= f->value;
    } else {
      kids.push_back(std::move(f));
    }
  }
  if (c == Scalar(0.0)) return make_constant(0.0);
  if (kids.empty()) return make_constant(c);
  if (c != Scalar(1.0)) kids.insert(kids.begin(), make_constant(c));
  if (kids.size() == 1) return kids.front();
  auto n = raw(NodeKind::Product);
  const_cast<Expr*>(n.get())->kids = std::move(kids);
  return n;
}

ExprPtr make_quotient(ExprPtr num, ExprPtr den) {
  if (!num || !den) throw EvalError("null expression handle");
  if (is_constant(num) && is_constant(den) && den->value != Scalar(0.0))
    return make_constant(num->value / den->value);
  if (is_real_constant(den, 1.0)) return num;
  auto n = raw(NodeKind::Quotient);
  const_cast<Expr*>(n.get())->kids = {std::move(num), std::move(den)};
  return n;
}

ExprPtr make_power(ExprPtr base, Scalar exponent, bool exponent_is_integer) {
  if (!base) throw EvalError("null expression handle");
  if (exponent_is_integer &&
      (exponent.imag() != 0.0 || exponent.real() != std::rint(exponent.real())))
    throw EvalError("integer exponent flag on a non-integer value");
  if (exponent == Scalar(1.0)) return base;
  if (exponent == Scalar(0.0)) return make_constant(1.0);
  if (is_constant(base)) {
    if (exponent_is_integer && !(base->value == Scalar(0.0) && exponent.real() < 0.0)) {
      return make_constant(std::pow(base->value,
                                    static_cast<int>(std::rint(exponent.real()))));
    }
    if (!exponent_is_integer && foldable_positive(base) && exponent.imag() == 0.0)
      return make_constant(std::pow(base->value.real(), exponent.real()));
  }
  auto n = raw(NodeKind::Power);
  auto* m = const_cast<Expr*>(n.get());
  m->kids = {std::move(base)};
  m->exponent = exponent;
  m->exponent_is_integer = exponent_is_integer;
  return n;
}

ExprPtr make_call(Func f, ExprPtr arg) {
  if (!arg) throw EvalError("null expression handle");
  if (is_constant(arg)) {
    Scalar v = arg->value;
    switch (f) {
      case Func::Exp: return make_constant(std::exp(v));
      case Func::Sin: return make_constant(std::sin(v));
      case Func::Cos: return make_constant(std::cos(v));
      case Func::Log:
        if (foldable_positive(arg))
          return make_constant(std::log(v.real()));
        break;
      case Func::Sqrt:
        if (is_constant(arg) && v.imag() == 0.0 && v.real() >= 0.0)
          return make_constant(std::sqrt(v.real()));
        break;
    }
  }
  auto n = raw(NodeKind::Call);
  auto* m = const_cast<Expr*>(n.get());
  m->kids = {std::move(arg)};
  m->func = f;
  return n;
}

ExprPtr operator+(const ExprPtr& a, const ExprPtr& b) { return make_sum({a, b}); }

ExprPtr operator-(const ExprPtr& a, const ExprPtr& b) {
  return make_sum({a, make_product({make_constant(-1.0), b})});
}

ExprPtr operator-(const ExprPtr& a) {
  return make_product({make_constant(-1.0), a});
}

ExprPtr operator*(const ExprPtr& a, const ExprPtr& b) {
  return make_product({a, b});
}

ExprPtr operator/(const ExprPtr& a, const ExprPtr& b) {
  return make_quotient(a, b);
}

bool is_constant_zero(const ExprPtr& e) {
  return e && is_constant(e) && e->value == Scalar(0.0);
}

bool is_constant_one(const ExprPtr& e) {
  return e && is_constant(e) && e->value == Scalar(1.0);
}

// ---------------------------------------------------------------------------
// Variable bindings
// ---------------------------------------------------------------------------

VariableContext::VariableContext(
    std::initializer_list<std::pair<std::string, Scalar>> init) {
  for (const auto& [k, v] : init) bind(k, v);
}

void VariableContext::bind(const std::string& name, Scalar value) {
  for (auto& [k, v] : entries_) {
    if (k == name) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(name, value);
}

const Scalar* VariableContext::find(const std::string& name) const {
  for (const auto& [k, v] : entries_)
    if (k == name) return &v;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

double evaluate_real(const Expr& e, const VariableContext& ctx) {
  switch (e.kind) {
    case NodeKind::Constant:
      if (e.value.imag() != 0.0)
        throw EvalError("complex constant in real-mode evaluation");
      return e.value.real();
    case NodeKind::Variable: {
      const Scalar* v = ctx.find(e.name);
      if (!v) throw EvalError("unbound variable '" + e.name + "'");
      return v->real();
    }
    case NodeKind::Sum: {
      double acc = 0.0;
      for (const auto& k : e.kids) acc += evaluate_real(*k, ctx);
      return acc;
    }
    case NodeKind::Product: {
      double acc = 1.0;
      for (const auto& k : e.kids) acc *= evaluate_real(*k, ctx);
      return acc;
    }
    case NodeKind::Quotient: {
      double num = evaluate_real(*e.kids[0], ctx);
      double den = evaluate_real(*e.kids[1], ctx);
      if (den == 0.0) throw EvalError("division by zero");
      return num / den;
    }
    case NodeKind::Power: {
      double base = evaluate_real(*e.kids[0], ctx);
      double ex = e.exponent.real();
      if (e.exponent_is_integer) {
        if (base == 0.0 && ex < 0.0) throw EvalError("zero raised to a negative power");
        return std::pow(base, ex);
      }
      if (base < 0.0)
        throw EvalError("negative base with non-integer exponent in real mode");
      if (base == 0.0) {
        if (ex <= 0.0) throw EvalError("zero base with non-positive exponent");
        return 0.0;
      }
      return std::pow(base, ex);
    }
    case NodeKind::Call: {
      double a = evaluate_real(*e.kids[0], ctx);
      switch (e.func) {
        case Func::Exp: return std::exp(a);
        case Func::Sin: return std::sin(a);
        case Func::Cos: return std::cos(a);
        case Func::Log:
          if (a <= 0.0) throw EvalError("log of a non-positive value in real mode");
          return std::log(a);
        case Func::Sqrt:
          if (a < 0.0) throw EvalError("sqrt of a negative value in real mode");
          return std::sqrt(a);
      }
      break;
    }
  }
  throw EvalError("corrupt expression node");
}

Scalar evaluate_complex(const Expr& e, const VariableContext& ctx) {
  switch (e.kind) {
    case NodeKind::Constant:
      return e.value;
    case NodeKind::Variable: {
      const Scalar* v = ctx.find(e.name);
      if (!v) throw EvalError("unbound variable '" + e.name + "'");
      return *v;
    }
    case NodeKind::Sum: {
      Scalar acc = 0.0;
      for (const auto& k : e.kids) acc += evaluate_complex(*k, ctx);
      return acc;
    }
    case NodeKind::Product: {
      Scalar acc = 1.0;
      for (const auto& k : e.kids) acc *= evaluate_complex(*k, ctx);
      return acc;
    }
    case NodeKind::Quotient: {
      Scalar num = evaluate_complex(*e.kids[0], ctx);
      Scalar den = evaluate_complex(*e.kids[1], ctx);
      if (den == Scalar(0.0)) throw EvalError("division by zero");
      return num / den;
    }
    case NodeKind::Power: {
      Scalar base = evaluate_complex(*e.kids[0], ctx);
      if (e.exponent_is_integer) {
        int k = static_cast<int>(std::rint(e.exponent.real()));
        if (base == Scalar(0.0) && k < 0)
          throw EvalError("zero raised to a negative power");
        if (base == Scalar(0.0)) return k == 0 ? Scalar(1.0) : Scalar(0.0);
        // Exact repeated multiplication keeps real inputs exactly real,
        // which std::pow(complex, complex) does not guarantee.
        Scalar acc = 1.0;
        Scalar b = k < 0 ? Scalar(1.0) / base : base;
        for (int i = std::abs(k); i > 0; --i) acc *= b;
        return acc;
      }
      if (base == Scalar(0.0)) {
        if (e.exponent.real() <= 0.0)
          throw EvalError("zero base with non-positive exponent");
        return 0.0;
      }
      return std::pow(base, e.exponent);
    }
    case NodeKind::Call: {
      Scalar a = evaluate_complex(*e.kids[0], ctx);
      switch (e.func) {
        case Func::Exp: return std::exp(a);
        case Func::Sin: return std::sin(a);
        case Func::Cos: return std::cos(a);
        case Func::Log:
          if (a == Scalar(0.0)) throw EvalError("log of zero");
          return std::log(a);
        case Func::Sqrt: return std::sqrt(a);
      }
      break;
    }
  }
  throw EvalError("corrupt expression node");
}

}  // namespace

Scalar evaluate(const ExprPtr& e, const VariableContext& ctx, EvalMode mode) {
  if (!e) throw EvalError("null expression handle");
  if (mode == EvalMode::Real) return Scalar(evaluate_real(*e, ctx), 0.0);
  return evaluate_complex(*e, ctx);
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

namespace {

ExprPtr diff(const ExprPtr& e, const std::string& var,
             std::unordered_map<const Expr*, ExprPtr>& memo) {
  auto it = memo.find(e.get());
  if (it != memo.end()) return it->second;
  ExprPtr out;
  switch (e->kind) {
    case NodeKind::Constant:
      out = make_constant(0.0);
      break;
    case NodeKind::Variable:
      out = make_constant(e->name == var ? 1.0 : 0.0);
      break;
    case NodeKind::Sum: {
      std::vector<ExprPtr> terms;
      terms.reserve(e->kids.size());
      for (const auto& k : e->kids) terms.push_back(diff(k, var, memo));
      out = make_sum(std::move(terms));
      break;
    }
    case NodeKind::Product: {
      std::vector<ExprPtr> terms;
      for (std::size_t i = 0; i < e->kids.size(); ++i) {
        ExprPtr di = diff(e->kids[i], var, memo);
        if (is_constant_zero(di)) continue;
        std::vector<ExprPtr> factors;
        factors.reserve(e->kids.size());
        for (std::size_t j = 0; j < e->kids.size(); ++j)
          factors.push_back(j == i ? di : e->kids[j]);
        terms.push_back(make_product(std::move(factors)));
      }
      out = make_sum(std::move(terms));
      break;
    }
    case NodeKind::Quotient: {
      const ExprPtr& u = e->kids[0];
      const ExprPtr& v = e->kids[1];
      ExprPtr du = diff(u, var, memo);
      ExprPtr dv = diff(v, var, memo);
      if (is_constant_zero(dv)) {
        out = make_quotient(du, v);
      } else {
        out = make_quotient(du * v - u * dv, v * v);
      }
      break;
    }
    case NodeKind::Power: {
      const ExprPtr& u = e->kids[0];
      ExprPtr du = diff(u, var, memo);
      ExprPtr inner = make_power(u, e->exponent - Scalar(1.0), e->exponent_is_integer);
      out = make_product({make_constant(e->exponent), inner, du});
      break;
    }
    case NodeKind::Call: {
      const ExprPtr& u = e->kids[0];
      ExprPtr du = diff(u, var, memo);
      switch (e->func) {
        case Func::Exp: out = e * du; break;
        case Func::Log: out = make_quotient(du, u); break;
        case Func::Sin: out = make_call(Func::Cos, u) * du; break;
        case Func::Cos: out = -(make_call(Func::Sin, u) * du); break;
        case Func::Sqrt:
          out = make_quotient(du, make_constant(2.0) * e);
          break;
      }
      break;
    }
  }
  memo.emplace(e.get(), out);
  return out;
}

}  // namespace

ExprPtr differentiate(const ExprPtr& e, const std::string& var) {
  if (!e) throw EvalError("null expression handle");
  std::unordered_map<const Expr*, ExprPtr> memo;
  return diff(e, var, memo);
}

// ---------------------------------------------------------------------------
// Substitution and variable discovery
// ---------------------------------------------------------------------------

namespace {

ExprPtr subst(const ExprPtr& e, const std::map<std::string, ExprPtr>& bindings,
              std::unordered_map<const Expr*, ExprPtr>& memo) {
  auto it = memo.find(e.get());
  if (it != memo.end()) return it->second;
  ExprPtr out;
  switch (e->kind) {
    case NodeKind::Constant:
      out = e;
      break;
    case NodeKind::Variable: {
      auto b = bindings.find(e->name);
      out = b == bindings.end() ? e : b->second;
      break;
    }
    case NodeKind::Sum:
    case NodeKind::Product: {
      std::vector<ExprPtr> kids;
      kids.reserve(e->kids.size());
      for (const auto& k : e->kids) kids.push_back(subst(k, bindings, memo));
      out = e->kind == NodeKind::Sum ? make_sum(std::move(kids))
                                     : make_product(std::move(kids));
      break;
    }
    case NodeKind::Quotient:
      out = make_quotient(subst(e->kids[0], bindings, memo),
                          subst(e->kids[1], bindings, memo));
      break;
    case NodeKind::Power:
      out = make_power(subst(e->kids[0], bindings, memo), e->exponent,
                       e->exponent_is_integer);
      break;
    case NodeKind::Call:
      out = make_call(e->func, subst(e->kids[0], bindings, memo));
      break;
  }
  memo.emplace(e.get(), out);
  return out;
}

void collect_vars(const Expr& e, std::set<std::string>& out,
                  std::set<const Expr*>& seen) {
  if (!seen.insert(&e).second) return;
  if (e.kind == NodeKind::Variable) out.insert(e.name);
  for (const auto& k : e.kids) collect_vars(*k, out, seen);
}

}  // namespace

ExprPtr substitute(const ExprPtr& e,
                   const std::map<std::string, ExprPtr>& bindings) {
  if (!e) throw EvalError("null expression handle");
  std::unordered_map<const Expr*, ExprPtr> memo;
  return subst(e, bindings, memo);
}

std::vector<std::string> variables_of(const ExprPtr& e) {
  if (!e) throw EvalError("null expression handle");
  std::set<std::string> names;
  std::set<const Expr*> seen;
  collect_vars(*e, names, seen);
  return {names.begin(), names.end()};
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string format_constant(Scalar v) {
  if (v.imag() != 0.0)
    throw EvalError("cannot print an expression with complex constants");
  return format_double(v.real());
}

// Precedence levels for parenthesization: sum < product/quotient < power
// < atoms.
int precedence(const Expr& e) {
  switch (e.kind) {
    case NodeKind::Sum: return 1;
    case NodeKind::Product:
    case NodeKind::Quotient: return 2;
    case NodeKind::Power: return 3;
    default: return 4;
  }
}

std::string print(const Expr& e);

std::string print_wrapped(const Expr& e, int min_prec) {
  std::string s = print(e);
  bool needs = precedence(e) < min_prec;
  // A leading minus would bind wrongly under ^ and * contexts.
  if (!needs && min_prec >= 3 && !s.empty() && s.front() == '-') needs = true;
  return needs ? "(" + s + ")" : s;
}

std::string print(const Expr& e) {
  switch (e.kind) {
    case NodeKind::Constant:
      return format_constant(e.value);
    case NodeKind::Variable:
      return e.name;
    case NodeKind::Sum: {
      std::string out;
      for (std::size_t i = 0; i < e.kids.size(); ++i) {
        std::string part = print_wrapped(*e.kids[i], 2);
        if (i == 0) {
          out = part;
        } else if (!part.empty() && part.front() == '-') {
          out += " - " + part.substr(1);
        } else {
          out += " + " + part;
        }
      }
      return out;
    }
    case NodeKind::Product: {
      // A leading factor -1 prints as a sign, not as "-1*".
      std::size_t begin = 0;
      std::string out;
      if (is_real_constant(e.kids[0], -1.0) && e.kids.size() > 1) {
        out = "-";
        begin = 1;
      }
      for (std::size_t i = begin; i < e.kids.size(); ++i) {
        if (i > begin) out += "*";
        out += print_wrapped(*e.kids[i], 3);
      }
      return out;
    }
    case NodeKind::Quotient:
      return print_wrapped(*e.kids[0], 2) + "/" + print_wrapped(*e.kids[1], 3);
    case NodeKind::Power: {
      std::string base = print_wrapped(*e.kids[0], 4);
      double ex = e.exponent.real();
      std::string etext = format_constant(e.exponent);
      if (ex < 0.0 || (!e.exponent_is_integer && etext.find('e') != std::string::npos))
        etext = "(" + etext + ")";
      return base + "^" + etext;
    }
    case NodeKind::Call: {
      const char* names[] = {"exp", "log", "sin", "cos", "sqrt"};
      return std::string(names[static_cast<int>(e.func)]) + "(" +
             print(*e.kids[0]) + ")";
    }
  }
  throw EvalError("corrupt expression node");
}

}  // namespace

std::string to_string(const ExprPtr& e) {
  if (!e) throw EvalError("null expression handle");
  return print(*e);
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace {

using detail::Lexer;
using detail::Token;

class ExprParser {
public:
  explicit ExprParser(const std::string& src) : lex_(src) {}

  ExprPtr run() {
    ExprPtr e = expr();
    if (lex_.peek().type != Token::Type::End)
      lex_.fail("unexpected trailing input");
    return e;
  }

private:
  ExprPtr expr() {
    ExprPtr acc = term();
    while (true) {
      Token::Type t = lex_.peek().type;
      if (t == Token::Type::Plus) {
        lex_.take();
        acc = acc + term();
      } else if (t == Token::Type::Minus) {
        lex_.take();
        acc = acc - term();
      } else {
        return acc;
      }
    }
  }

  ExprPtr term() {
    ExprPtr acc = factor();
    while (true) {
      Token::Type t = lex_.peek().type;
      if (t == Token::Type::Star) {
        lex_.take();
        acc = acc * factor();
      } else if (t == Token::Type::Slash) {
        lex_.take();
        acc = make_quotient(acc, factor());
      } else {
        return acc;
      }
    }
  }

  ExprPtr factor() {
    ExprPtr b = base();
    if (lex_.peek().type != Token::Type::Caret) return b;
    lex_.take();
    bool neg = false;
    if (lex_.peek().type == Token::Type::Minus) {
      lex_.take();
      neg = true;
    }
    std::size_t at = lex_.peek().pos;
    ExprPtr e = base();
    if (e->kind != NodeKind::Constant)
      throw ParseError("exponent must be a constant", at);
    Scalar ex = neg ? -e->value : e->value;
    bool integral = ex.imag() == 0.0 && ex.real() == std::rint(ex.real()) &&
                    std::abs(ex.real()) <= 1e9;
    return make_power(std::move(b), ex, integral);
  }

  ExprPtr base() {
    Token t = lex_.peek();
    switch (t.type) {
      case Token::Type::Number:
        lex_.take();
        return make_constant(t.number);
      case Token::Type::Minus:
        lex_.take();
        return -base();
      case Token::Type::LParen: {
        lex_.take();
        ExprPtr e = expr();
        expect_rparen();
        return e;
      }
      case Token::Type::Ident: {
        lex_.take();
        if (lex_.peek().type != Token::Type::LParen)
          return make_variable(t.text);
        Func f;
        bool negate = false;
        if (t.text == "exp") f = Func::Exp;
        else if (t.text == "log") f = Func::Log;
        else if (t.text == "sin") f = Func::Sin;
        else if (t.text == "cos") f = Func::Cos;
        else if (t.text == "sqrt") f = Func::Sqrt;
        else if (t.text == "neg") { f = Func::Exp; negate = true; }
        else throw ParseError("unknown function '" + t.text + "'", t.pos);
        lex_.take();
        ExprPtr arg = expr();
        expect_rparen();
        return negate ? -arg : make_call(f, std::move(arg));
      }
      default:
        lex_.fail("expected a number, identifier, or '('");
    }
  }

  void expect_rparen() {
    if (lex_.peek().type != Token::Type::RParen) lex_.fail("expected ')'");
    lex_.take();
  }

  Lexer lex_;
};

}  // namespace

ExprPtr parse_expression(const std::string& text) {
  return ExprParser(text).run();
}

// ---------------------------------------------------------------------------
// Probabilistic zero test
// ---------------------------------------------------------------------------

bool ZeroTester::is_zero(const ExprPtr& e,
                         std::span<const std::string> vars) const {
  if (!e) throw EvalError("null expression handle");
  if (e->kind == NodeKind::Constant) return e->value == Scalar(0.0);
  for (const auto& name : variables_of(e)) {
    if (std::find(vars.begin(), vars.end(), name) == vars.end())
      throw EvalError("unbound variable '" + name + "' in zero test");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  int clean = 0;
  int attempts = 0;
  const int max_attempts = points * 20;
  while (clean < points && attempts < max_attempts) {
    ++attempts;
    VariableContext ctx;
    for (const auto& v : vars) ctx.bind(v, dist(rng));
    Scalar val;
    try {
      val = evaluate(e, ctx, EvalMode::Complex);
    } catch (const EvalError&) {
      continue;  // singular draw: re-sample
    }
    if (!std::isfinite(val.real()) || !std::isfinite(val.imag())) continue;
    if (std::abs(val) > tol) return false;
    ++clean;
  }
  // Never obtained a valid sample: cannot certify the zero function.
  return clean > 0;
}

}  // namespace superflow
