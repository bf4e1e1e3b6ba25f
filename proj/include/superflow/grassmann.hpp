#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "superflow/scalar.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// Grassmann algebra with up to 16 anticommuting generators.
//
// A monomial is a subset of generators encoded as a bitmask: bit i set means
// generator number i+1 participates.  The normalized form of a monomial is
// the ascending product of its generators, so the bitmask alone identifies
// it; all reordering signs are produced when two monomials are multiplied.
// ---------------------------------------------------------------------------

using Mono = std::uint32_t;

inline constexpr int kMaxGenerators = 16;

inline int mono_degree(Mono m) { return std::popcount(m); }
inline int mono_parity(Mono m) { return std::popcount(m) & 1; }

// Sign of sorting the concatenation of two disjoint ascending monomials
// into one ascending monomial: (-1)^{number of transposed pairs}.  A pair
// (a, b) with a in `lhs`, b in `rhs` is transposed exactly when a > b.
inline int merge_sign(Mono lhs, Mono rhs) {
  int inversions = 0;
  while (rhs) {
    int b = std::countr_zero(rhs);
    rhs &= rhs - 1;
    inversions += std::popcount(lhs >> (b + 1));
  }
  return (inversions & 1) ? -1 : 1;
}

// Human-readable monomial, e.g. "xi1*xi3" for mask 0b101; "1" for the
// empty monomial.  `names[i]` labels generator i+1.
inline std::string mono_to_string(Mono m, std::span<const std::string> names) {
  if (m == 0) return "1";
  std::string out;
  while (m) {
    int b = std::countr_zero(m);
    m &= m - 1;
    if (!out.empty()) out += "*";
    out += names[static_cast<std::size_t>(b)];
  }
  return out;
}

// Coefficient rings plug in through this trait: exact zero detection and
// negation.  Scalars are handled here; expression and polynomial
// coefficients specialize it next to their own definitions.
template <class Coeff>
struct CoeffTraits;

template <>
struct CoeffTraits<Scalar> {
  static Scalar zero() { return Scalar(0.0); }
  static bool is_zero(const Scalar& c) { return c == Scalar(0.0); }
  static Scalar negate(const Scalar& c) { return -c; }
};

// ---------------------------------------------------------------------------
// Multivector: a finite sum  sum_I c_I xi^I  with coefficients in a
// commutative ring (numbers, expressions, polynomials).  Terms are kept in
// a sorted sparse map; coefficients that are exactly zero are never stored.
// ---------------------------------------------------------------------------

template <class Coeff>
class Multivector {
public:
  Multivector() = default;
  explicit Multivector(int generators) : n_(checked(generators)) {}

  static Multivector constant(int generators, const Coeff& c) {
    Multivector u(generators);
    u.add_term(0, c);
    return u;
  }

  // Generator number `index` (1-based) as a multivector.
  static Multivector generator(int generators, int index, const Coeff& one) {
    if (index < 1 || index > generators)
      throw DimensionError("generator index out of range");
    Multivector u(generators);
    u.add_term(Mono(1) << (index - 1), one);
    return u;
  }

  static Multivector term(int generators, Mono m, const Coeff& c) {
    Multivector u(generators);
    u.add_term(m, c);
    return u;
  }

  int generators() const { return n_; }
  bool is_zero() const { return terms_.empty(); }
  const std::map<Mono, Coeff>& terms() const { return terms_; }

  // Accumulate c onto monomial m, dropping the entry if it cancels.
  void add_term(Mono m, const Coeff& c) {
    check_mask(m);
    if (CoeffTraits<Coeff>::is_zero(c)) return;
    auto it = terms_.find(m);
    if (it == terms_.end()) {
      terms_.emplace(m, c);
      return;
    }
    it->second = it->second + c;
    if (CoeffTraits<Coeff>::is_zero(it->second)) terms_.erase(it);
  }

  Coeff coefficient(Mono m) const {
    check_mask(m);
    auto it = terms_.find(m);
    return it == terms_.end() ? CoeffTraits<Coeff>::zero() : it->second;
  }

  // Terms of the requested parity (0 = even, 1 = odd).
  Multivector parity_part(int parity) const {
    Multivector out(n_);
    for (const auto& [m, c] : terms_)
      if (mono_parity(m) == parity) out.terms_.emplace(m, c);
    return out;
  }

  // True when every stored term has the requested parity (zero passes).
  bool is_homogeneous(int parity) const {
    for (const auto& [m, c] : terms_)
      if (mono_parity(m) != parity) return false;
    return true;
  }

  // Same element viewed in an algebra with `extra` more generators
  // appended after the existing ones.
  Multivector adjoin_generators(int extra) const {
    Multivector out(checked(n_ + extra));
    out.terms_ = terms_;
    return out;
  }

  // Relabel generators along a strictly increasing map: old generator i+1
  // becomes new generator positions[i] (1-based).  Monotonicity keeps all
  // monomials ascending, so no signs appear.
  Multivector embed(int new_generators, std::span<const int> positions) const {
    if (static_cast<int>(positions.size()) != n_)
      throw DimensionError("embedding map must list every generator");
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (positions[i] < 1 || positions[i] > new_generators)
        throw DimensionError("embedding position out of range");
      if (i > 0 && positions[i] <= positions[i - 1])
        throw DimensionError("embedding map must be strictly increasing");
    }
    Multivector out(new_generators);
    for (const auto& [m, c] : terms_) {
      Mono img = 0;
      Mono rest = m;
      while (rest) {
        int b = std::countr_zero(rest);
        rest &= rest - 1;
        img |= Mono(1) << (positions[static_cast<std::size_t>(b)] - 1);
      }
      out.terms_.emplace(img, c);
    }
    return out;
  }

  Multivector operator-() const {
    Multivector out(n_);
    for (const auto& [m, c] : terms_)
      out.terms_.emplace(m, CoeffTraits<Coeff>::negate(c));
    return out;
  }

  Multivector& operator+=(const Multivector& rhs) {
    require_same(rhs);
    for (const auto& [m, c] : rhs.terms_) add_term(m, c);
    return *this;
  }

  Multivector& operator-=(const Multivector& rhs) {
    require_same(rhs);
    for (const auto& [m, c] : rhs.terms_)
      add_term(m, CoeffTraits<Coeff>::negate(c));
    return *this;
  }

  friend Multivector operator+(Multivector lhs, const Multivector& rhs) {
    lhs += rhs;
    return lhs;
  }

  friend Multivector operator-(Multivector lhs, const Multivector& rhs) {
    lhs -= rhs;
    return lhs;
  }

  // Grassmann product.  Overlapping monomials annihilate; disjoint ones
  // merge with the transposition sign.
  friend Multivector operator*(const Multivector& lhs, const Multivector& rhs) {
    lhs.require_same(rhs);
    Multivector out(lhs.n_);
    for (const auto& [ma, ca] : lhs.terms_) {
      for (const auto& [mb, cb] : rhs.terms_) {
        if (ma & mb) continue;
        Coeff c = ca * cb;
        if (merge_sign(ma, mb) < 0) c = CoeffTraits<Coeff>::negate(c);
        out.add_term(ma | mb, c);
      }
    }
    return out;
  }

  // Left multiplication by a ring element.
  Multivector scaled(const Coeff& c) const {
    Multivector out(n_);
    if (CoeffTraits<Coeff>::is_zero(c)) return out;
    for (const auto& [m, coeff] : terms_) out.add_term(m, c * coeff);
    return out;
  }

  // Apply a map to every coefficient (e.g. evaluate expressions).
  template <class F>
  auto map_coefficients(F&& f) const {
    using Out = decltype(f(std::declval<const Coeff&>()));
    Multivector<Out> out(n_);
    for (const auto& [m, c] : terms_) out.add_term(m, f(c));
    return out;
  }

private:
  static int checked(int n) {
    if (n < 0 || n > kMaxGenerators)
      throw DimensionError("generator count must lie in [0, 16]");
    return n;
  }

  void check_mask(Mono m) const {
    if (n_ < kMaxGenerators && (m >> n_) != 0)
      throw DimensionError("monomial uses a generator outside the algebra");
  }

  void require_same(const Multivector& rhs) const {
    if (n_ != rhs.n_)
      throw DimensionError("multivectors live in different Grassmann algebras");
  }

  template <class>
  friend class Multivector;

  int n_ = 0;
  std::map<Mono, Coeff> terms_;
};

// Left partial derivative with respect to generator `index` (1-based):
// annihilates terms missing the generator, otherwise removes it and picks
// up (-1)^{number of participating generators below it}.
template <class Coeff>
Multivector<Coeff> odd_partial(const Multivector<Coeff>& v, int index) {
  if (index < 1 || index > v.generators())
    throw DimensionError("odd partial: generator index out of range");
  const Mono bit = Mono(1) << (index - 1);
  const Mono below = bit - 1;
  Multivector<Coeff> out(v.generators());
  for (const auto& [m, c] : v.terms()) {
    if (!(m & bit)) continue;
    Coeff coeff = (std::popcount(m & below) & 1) ? CoeffTraits<Coeff>::negate(c) : c;
    out.add_term(m & ~bit, coeff);
  }
  return out;
}

using GrassmannValue = Multivector<Scalar>;

// Largest |coefficient| (0 for the zero element).
inline double sup_norm(const GrassmannValue& v) {
  double out = 0.0;
  for (const auto& [m, c] : v.terms()) out = std::max(out, std::abs(c));
  return out;
}

inline double max_abs_diff(const GrassmannValue& a, const GrassmannValue& b) {
  return sup_norm(a - b);
}

}  // namespace superflow
