// Acceptance suite: one line per criterion, nonzero exit on any failure.
//
// Every check here either compares against a closed form worked out by hand
// or verifies an algebraic law exactly; tolerances are stated inline.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "superflow/action.hpp"
#include "superflow/flow.hpp"
#include "superflow/problem.hpp"

using namespace superflow;

namespace {

ExprPtr ex(const std::string& text) { return parse_expression(text); }

SuperVectorField field_1_1(const std::string& comp_x,
                           const std::string& comp_xi) {
  SuperDomain dom({"x"}, {"xi"}, EvalMode::Real);
  std::vector<SymbolicValue> comps{
      parse_superfunction(comp_x, dom).value(),
      parse_superfunction(comp_xi, dom).value()};
  return SuperVectorField(dom, comps);
}

FlowProblem identity_problem(const SuperVectorField& X) {
  return FlowProblem{X, MorphismData::identity(X.domain()), 0.0};
}

double uniform_pm(std::mt19937_64& rng, double amplitude) {
  return amplitude *
         (-1.0 + 2.0 * std::ldexp(static_cast<double>(rng() >> 11), -53));
}

// --------------------------------------------------------------------------
// 1. Exhaustive algebra laws for n <= 5.
// --------------------------------------------------------------------------

bool criterion_grassmann(std::string& detail) {
  for (int n = 1; n <= 5; ++n) {
    const Mono top = Mono(1) << n;
    // nilpotency of every odd-parity basis monomial
    for (Mono a = 0; a < top; ++a) {
      GrassmannValue va = GrassmannValue::term(n, a, 1.0);
      if (mono_parity(a) == 1 && !(va * va).is_zero()) {
        detail = "odd basis monomial with nonzero square";
        return false;
      }
    }
    for (Mono a = 0; a < top; ++a) {
      GrassmannValue va = GrassmannValue::term(n, a, 1.0);
      for (Mono b = 0; b < top; ++b) {
        GrassmannValue vb = GrassmannValue::term(n, b, 1.0);
        // graded commutativity, exact
        double sign = (mono_parity(a) && mono_parity(b)) ? -1.0 : 1.0;
        if (max_abs_diff(va * vb, (vb * va).scaled(sign)) != 0.0) {
          detail = "graded commutativity violated";
          return false;
        }
        for (Mono c = 0; c < top; ++c) {
          GrassmannValue vc = GrassmannValue::term(n, c, 1.0);
          if (max_abs_diff((va * vb) * vc, va * (vb * vc)) != 0.0) {
            detail = "associativity violated";
            return false;
          }
          // sign cocycle on disjoint masks: both bracketings of the
          // three-fold product must produce the same overall sign
          if (!(a & b) && !(b & c) && !(a & c)) {
            int lhs = merge_sign(a, b) * merge_sign(a | b, c);
            int rhs = merge_sign(b, c) * merge_sign(a, b | c);
            if (lhs != rhs) {
              detail = "sign cocycle violated";
              return false;
            }
          }
        }
      }
    }
  }
  return true;
}

// --------------------------------------------------------------------------
// 2. Integrator vs order-12 series on seeded polynomial corpora.
// --------------------------------------------------------------------------

bool criterion_series_oracle(std::string& detail) {
  std::vector<SuperDomain> domains{
      SuperDomain({"x"}, {"xi1", "xi2"}, EvalMode::Real),
      SuperDomain({"x", "y"}, {"xi1", "xi2"}, EvalMode::Real)};
  const std::vector<double> ts{-0.3, -0.2, -0.1, 0.1, 0.2, 0.3};
  double worst = 0.0;
  for (const SuperDomain& dom : domains) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      SuperVectorField X = make_random_polynomial_field(dom, seed);
      MorphismData id = MorphismData::identity(dom);
      LieSeries series(X, id, 12);
      FlowProblem prob{X, id, 0.0};
      std::vector<Scalar> base(dom.even_dim(), Scalar(0.0));
      ODESettings st;
      st.horizon = 0.35;
      FlowResult res = integrate_flow(prob, base, st);
      if (res.t_max() < 0.3 || res.t_min() > -0.3) {
        std::ostringstream os;
        os << "seed " << seed << " stopped early: [" << res.t_min() << ", "
           << res.t_max() << "]";
        detail = os.str();
        return false;
      }
      worst = std::max(worst, oracle_deviation(res, series, ts));
    }
  }
  std::ostringstream os;
  os << "max deviation " << worst;
  detail = os.str();
  return worst <= 1e-6;
}

// --------------------------------------------------------------------------
// 3. Running-example regression: closed form, parameters, composition.
// --------------------------------------------------------------------------

bool criterion_running_example(std::string& detail) {
  SuperVectorField X = field_1_1("1 + xi", "1");
  FlowProblem prob = identity_problem(X);
  const double x0 = 0.25;
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(x0)});

  double worst = 0.0;
  for (double t : {-0.8, -0.4, -0.1, 0.0, 0.25, 0.5, 0.8}) {
    FlowSample s = res.sample(t);
    // F*(x) = x + t + tau xi, F*(xi) = xi + tau over (xi, tau)
    GrassmannValue want_x =
        GrassmannValue::constant(2, Scalar(x0 + t)) +
        GrassmannValue::term(2, 0b10, 1.0) * GrassmannValue::term(2, 0b01, 1.0);
    GrassmannValue want_xi =
        GrassmannValue::term(2, 0b01, 1.0) + GrassmannValue::term(2, 0b10, 1.0);
    worst = std::max(worst, max_abs_diff(s.full(0), want_x));
    worst = std::max(worst, max_abs_diff(s.full(1), want_xi));
  }
  if (worst > 1e-9) {
    std::ostringstream os;
    os << "closed-form deviation " << worst;
    detail = os.str();
    return false;
  }

  CriterionReport cr = find_action_params(X);
  if (!cr.is_action() || std::abs(cr.params.a - Scalar(1.0)) > 1e-10 ||
      std::abs(cr.params.b) > 1e-10) {
    detail = "parameters are not (1, 0)";
    return false;
  }

  std::mt19937_64 rng(1729);
  std::vector<std::pair<double, double>> pairs;
  while (pairs.size() < 10)
    pairs.emplace_back(uniform_pm(rng, 0.4), uniform_pm(rng, 0.4));
  LocalActionReport la = verify_local_action(res, cr.params, pairs);
  std::ostringstream os;
  os << "composition difference " << la.max_difference;
  detail = os.str();
  return la.max_difference <= 1e-8;
}

// --------------------------------------------------------------------------
// 4. Counterexample: flow exists, but no parameters make it an action.
// --------------------------------------------------------------------------

bool criterion_counterexample(std::string& detail) {
  SuperVectorField X = field_1_1("1 + xi", "1 + xi");
  CriterionReport cr = find_action_params(X);
  if (cr.is_action()) {
    detail = "criterion wrongly reports an action";
    return false;
  }

  FlowProblem prob = identity_problem(X);
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(0.2)});
  std::vector<double> ts{-0.3, -0.15, 0.0, 0.15, 0.3};

  // the flow equation itself holds (parameter-independent part)
  StrongFlowReport id_part = strong_flow_residual(res, {0.0, 0.0}, ts);
  if (id_part.identity_residual > 1e-8) {
    std::ostringstream os;
    os << "identity residual " << id_part.identity_residual;
    detail = os.str();
    return false;
  }

  // symbolic lower bound, independent of the integrator: the sup norm of
  // the residue field R_{a,b} at the sampled base point over the a*b = 0
  // locus.  Components by hand: R(x) = (a-1) + (b+1) xi,
  // R(xi) = (b-1) + a xi, so the norm is >= 1 everywhere on the locus.
  double lower = 1e9;
  VariableContext ctx{{"x", Scalar(0.2)}};
  auto residue_norm = [&](double a, double b) {
    SuperVectorField R = structure_residue_field(X, {a, b});
    double norm = 0.0;
    for (int j = 0; j < 2; ++j) {
      GrassmannValue v = R.component(j).map_coefficients(
          [&](const ExprPtr& c) { return evaluate(c, ctx, EvalMode::Real); });
      norm = std::max(norm, sup_norm(v));
    }
    return norm;
  };
  for (double s = -3.0; s <= 3.0; s += 0.05) {
    lower = std::min(lower, residue_norm(s, 0.0));
    lower = std::min(lower, residue_norm(0.0, s));
  }
  if (lower < 0.1) {
    std::ostringstream os;
    os << "symbolic residue lower bound " << lower;
    detail = os.str();
    return false;
  }

  // and the transported residue seen by the strong equation stays large
  // for the admissible projections of the best-effort parameters
  double weakest = 1e9;
  for (SupergroupParams cand : {SupergroupParams{cr.params.a, 0.0},
                                SupergroupParams{0.0, cr.params.b},
                                SupergroupParams{0.0, 0.0}}) {
    StrongFlowReport sf = strong_flow_residual(res, cand, ts);
    weakest = std::min(weakest, sf.action_residual);
  }
  std::ostringstream os;
  os << "residue lower bound " << lower << ", weakest transported residual "
     << weakest;
  detail = os.str();
  return weakest >= 0.1;
}

// --------------------------------------------------------------------------
// 5. Supergroup suite: invariance, bracket table, group laws.
// --------------------------------------------------------------------------

bool criterion_supergroup(std::string& detail) {
  ZeroTester zt;
  auto morphisms_match = [&](const MorphismData& lhs, const MorphismData& rhs) {
    for (int j = 0; j < lhs.target().coordinates(); ++j) {
      SuperFunction diff = lhs.pullback(j) - rhs.pullback(j);
      for (const auto& [m, c] : diff.value().terms()) {
        (void)m;
        if (!zt.is_zero(c, lhs.source().even_names())) return false;
      }
    }
    return true;
  };
  for (SupergroupParams p : {SupergroupParams{0.0, 0.0},
                             SupergroupParams{1.0, 0.0},
                             SupergroupParams{0.0, 1.0}}) {
    // right-invariance is checked internally and throws on failure
    auto [d0, d1] = right_invariant_fields(p);
    if (!field_is_zero(super_bracket(d0, d0), zt) ||
        !field_is_zero(super_bracket(d0, d1) + d1.scaled(p.b), zt) ||
        !field_is_zero(super_bracket(d1, d1) - d0.scaled(2.0 * p.a), zt)) {
      detail = "bracket table off";
      return false;
    }
    MorphismData mu = mu_pullback(p);
    if (!morphisms_match(compose(mu, group_mu_times_id(p)),
                         compose(mu, group_id_times_mu(p)))) {
      detail = "associativity failed";
      return false;
    }
    MorphismData id = MorphismData::identity(group_chart());
    if (!morphisms_match(compose(mu, group_unit_first()), id) ||
        !morphisms_match(compose(mu, group_unit_second()), id)) {
      detail = "unit law failed";
      return false;
    }
  }
  return true;
}

// --------------------------------------------------------------------------
// 6. Homological field: frozen f-part and passing checks at (0, 0).
// --------------------------------------------------------------------------

bool criterion_homological(std::string& detail) {
  SuperVectorField X = field_1_1("xi", "0");
  FlowProblem prob = identity_problem(X);
  const double x0 = 0.4;
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(x0)});

  SuperVectorField x1 = X.parity_split().second;
  double worst = 0.0;
  std::vector<double> ts{-2.0, -0.7, 0.0, 0.9, 2.5};
  for (double t : ts) {
    FlowSample s = res.sample(t);
    // f-part pinned to the initial morphism for all t
    worst = std::max(worst, max_abs_diff(s.f[0], GrassmannValue::constant(
                                                     1, Scalar(x0))));
    worst = std::max(worst, max_abs_diff(s.f[1], GrassmannValue::term(
                                                     1, 0b1, 1.0)));
    // g-part equals X1 applied to the coordinates, pulled to the sample
    worst = std::max(worst,
                     max_abs_diff(s.g[0], GrassmannValue::term(1, 0b1, 1.0)));
    worst = std::max(worst, sup_norm(s.g[1]));
  }
  if (worst > 1e-10) {
    std::ostringstream os;
    os << "f-part drift " << worst;
    detail = os.str();
    return false;
  }

  CriterionReport cr = find_action_params(X);
  if (!cr.is_action() || std::abs(cr.params.a) > 1e-12 ||
      std::abs(cr.params.b) > 1e-12) {
    detail = "expected parameters (0, 0)";
    return false;
  }
  StrongFlowReport sf = strong_flow_residual(res, cr.params, ts);
  std::mt19937_64 rng(1729);
  std::vector<std::pair<double, double>> pairs;
  while (pairs.size() < 10)
    pairs.emplace_back(uniform_pm(rng, 0.4), uniform_pm(rng, 0.4));
  LocalActionReport la = verify_local_action(res, cr.params, pairs);
  std::ostringstream os;
  os << "strong residuals " << sf.identity_residual << " / "
     << sf.action_residual << ", composition " << la.max_difference;
  detail = os.str();
  return sf.identity_residual <= 1e-8 && sf.action_residual <= 1e-8 &&
         la.max_difference <= 1e-8;
}

// --------------------------------------------------------------------------
// 7. Holomorphic runs: straight path, log coefficient, monodromy.
// --------------------------------------------------------------------------

bool criterion_holomorphic(std::string& detail) {
  const Scalar w0(1.0);
  const double z = 0.8;

  // plain quadratic field
  SuperDomain cdom({"w"}, {}, EvalMode::Complex);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("w^2"))};
  FlowProblem quad = identity_problem(SuperVectorField(cdom, comps));
  FlowResult straight = integrate_along_path(
      quad, std::vector<Scalar>{w0}, std::vector<Scalar>{Scalar(0.0), Scalar(z)});
  Scalar got = straight.sample_path(1.0).f[0].coefficient(0);
  Scalar want = 1.0 / (1.0 / w0 - z);
  if (std::abs(got - want) > 1e-8) {
    std::ostringstream os;
    os << "quadratic path error " << std::abs(got - want);
    detail = os.str();
    return false;
  }

  // soul-corrected field: the xi1 xi2 coefficient picks up a logarithm
  SuperDomain sdom({"w"}, {"xi1", "xi2"}, EvalMode::Complex);
  std::vector<SymbolicValue> scomps(3, SymbolicValue(2));
  scomps[0] = SymbolicValue::constant(2, ex("w^2")) +
              SymbolicValue::term(2, 0b11, ex("w^3"));
  FlowProblem soul = identity_problem(SuperVectorField(sdom, scomps));
  FlowResult spath = integrate_along_path(
      soul, std::vector<Scalar>{w0}, std::vector<Scalar>{Scalar(0.0), Scalar(z)});
  Scalar k = spath.sample_path(1.0).f[0].coefficient(0b11);
  Scalar kwant = -w0 * w0 * std::log(1.0 - z * w0) /
                 ((1.0 - z * w0) * (1.0 - z * w0));
  if (std::abs(k - kwant) > 1e-7) {
    std::ostringstream os;
    os << "log coefficient error " << std::abs(k - kwant);
    detail = os.str();
    return false;
  }

  // monodromy around the pole z = 1/w0, evaluated back at z0 = 0
  std::vector<Scalar> loop{Scalar(0.0), Scalar(1.0, -0.45), Scalar(2.0),
                           Scalar(1.0, 0.45), Scalar(0.0)};
  MonodromyReport mono = monodromy(soul, std::vector<Scalar>{w0}, loop);
  Scalar delta;
  for (std::size_t i = 0; i < mono.labels.size(); ++i)
    if (mono.labels[i].coordinate == 0 && mono.labels[i].mono == 0b11)
      delta = mono.delta[i];
  const Scalar two_pi_i(0.0, 2.0 * std::acos(-1.0));
  Scalar mwant = -two_pi_i * w0 * w0;  // (1 - z0 w0)^2 = 1 at z0 = 0
  if (std::abs(delta - mwant) > 1e-6) {
    std::ostringstream os;
    os << "monodromy error " << std::abs(delta - mwant);
    detail = os.str();
    return false;
  }

  // a loop that stays away from the pole transports trivially
  std::vector<Scalar> small_loop{Scalar(0.0), Scalar(0.2, -0.2), Scalar(0.4),
                                 Scalar(0.2, 0.2), Scalar(0.0)};
  MonodromyReport none = monodromy(soul, std::vector<Scalar>{w0}, small_loop);
  std::ostringstream os;
  os << "trivial-loop transport " << none.max_abs;
  detail = os.str();
  return none.max_abs <= 1e-9;
}

// --------------------------------------------------------------------------
// 8. Classical reduction: scalar quadratic blow-up.
// --------------------------------------------------------------------------

bool criterion_classical(std::string& detail) {
  SuperDomain dom({"y"}, {}, EvalMode::Real);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("y^2"))};
  FlowProblem prob = identity_problem(SuperVectorField(dom, comps));
  ODESettings st;
  st.rtol = 1e-10;
  st.atol = 1e-12;
  st.horizon = 2.0;
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(2.0)}, st);

  double worst = 0.0;
  for (double t = 0.0; t <= 0.45 + 1e-12; t += 0.05) {
    Scalar got = res.state_at(t)[0];
    Scalar want = 1.0 / (0.5 - t);
    worst = std::max(worst, std::abs(got - want));
  }
  double endpoint_gap = std::abs(res.t_max() - 0.5);
  std::ostringstream os;
  os << "trajectory error " << worst << ", endpoint gap " << endpoint_gap;
  detail = os.str();
  return worst <= 1e-8 && endpoint_gap <= 1e-3;
}

// --------------------------------------------------------------------------
// 9. Determinism: restart composition on the running example and corpus.
// --------------------------------------------------------------------------

bool criterion_determinism(std::string& detail) {
  struct Case {
    SuperVectorField X;
    double x0, t1, t2;
  };
  SuperDomain d12({"x"}, {"xi1", "xi2"}, EvalMode::Real);
  std::vector<Case> cases;
  cases.push_back({field_1_1("1 + xi", "1"), 0.25, 0.22, 0.31});
  cases.push_back({make_random_polynomial_field(d12, 3), 0.1, 0.08, -0.05});
  cases.push_back({make_random_polynomial_field(d12, 5), 0.1, -0.07, 0.12});

  double worst = 0.0;
  for (const Case& c : cases) {
    FlowProblem prob = identity_problem(c.X);
    ODESettings st;
    st.horizon = 0.6;
    std::vector<Scalar> base(
        static_cast<std::size_t>(c.X.domain().even_dim()), Scalar(c.x0));
    FlowResult res = integrate_flow(prob, base, st);
    FlowSample mid = res.sample(c.t1);
    MorphismData phi = sample_as_morphism(res, mid, false, "");
    FlowProblem leg{c.X, phi, 0.0};
    FlowResult res2 = integrate_flow(leg, base, st);
    FlowSample direct = res.sample(c.t1 + c.t2);
    FlowSample stitched = res2.sample(c.t2);
    for (int j = 0; j < c.X.domain().coordinates(); ++j) {
      worst = std::max(worst, max_abs_diff(direct.f[j], stitched.f[j]));
      worst = std::max(worst, max_abs_diff(direct.g[j], stitched.g[j]));
    }
  }
  std::ostringstream os;
  os << "max restart deviation " << worst;
  detail = os.str();
  return worst <= 1e-8;
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    bool (*run)(std::string&);
  };
  const Criterion criteria[] = {
      {1, "exhaustive algebra laws", criterion_grassmann},
      {2, "series-oracle equivalence on seeded corpora", criterion_series_oracle},
      {3, "running-example regression", criterion_running_example},
      {4, "counterexample stays a non-action", criterion_counterexample},
      {5, "supergroup law suite", criterion_supergroup},
      {6, "homological-field regression", criterion_homological},
      {7, "holomorphic paths and monodromy", criterion_holomorphic},
      {8, "classical quadratic blow-up", criterion_classical},
      {9, "restart determinism", criterion_determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    std::printf("[%s] %d. %s (%.2f s)%s%s\n", ok ? "PASS" : "FAIL", c.number,
                c.name, secs, detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++failures;
  }
  if (failures != 0) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
