#include "superflow/action.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace superflow {

void SupergroupParams::validate() const {
  if (std::abs(a * b) > 1e-12)
    throw FlowError("supergroup parameters must satisfy a*b = 0");
}

// ---------------------------------------------------------------------------
// The group charts and the multiplication morphism
// ---------------------------------------------------------------------------

SuperDomain group_chart(EvalMode mode) {
  return SuperDomain({"t"}, {"tau"}, mode);
}

SuperDomain group_square(EvalMode mode) {
  return SuperDomain({"t1", "t2"}, {"tau1", "tau2"}, mode);
}

SuperDomain group_cube(EvalMode mode) {
  return SuperDomain({"t1", "t2", "t3"}, {"tau1", "tau2", "tau3"}, mode);
}

namespace {

// exp(b * t_name) as an expression; collapses to 1 for b = 0.
ExprPtr exp_bt(Scalar b, const std::string& t_name) {
  return make_call(Func::Exp, make_constant(b) * make_variable(t_name));
}

}  // namespace

MorphismData mu_pullback(const SupergroupParams& params, EvalMode mode) {
  params.validate();
  SuperDomain gg = group_square(mode);
  SuperDomain g = group_chart(mode);

  // mu*(t) = t1 + t2 + a tau1 tau2  (tau1, tau2 = generators 1, 2 of gg)
  SymbolicValue mt =
      SymbolicValue::constant(2, make_variable("t1") + make_variable("t2"));
  mt += SymbolicValue::term(2, Mono(0b11), make_constant(params.a));

  // mu*(tau) = tau1 + exp(b t1) tau2
  SymbolicValue mtau = SymbolicValue::term(2, Mono(0b01), make_constant(1.0));
  mtau += SymbolicValue::term(2, Mono(0b10), exp_bt(params.b, "t1"));

  std::vector<SuperFunction> pulls;
  pulls.emplace_back(gg, std::vector<std::string>{}, std::move(mt));
  pulls.emplace_back(gg, std::vector<std::string>{}, std::move(mtau));
  return MorphismData(gg, g, {}, std::move(pulls));
}

MorphismData group_mu_times_id(const SupergroupParams& params, EvalMode mode) {
  params.validate();
  SuperDomain ggg = group_cube(mode);
  SuperDomain gg = group_square(mode);

  SymbolicValue t1p =
      SymbolicValue::constant(3, make_variable("t1") + make_variable("t2"));
  t1p += SymbolicValue::term(3, Mono(0b011), make_constant(params.a));
  SymbolicValue t2p = SymbolicValue::constant(3, make_variable("t3"));
  SymbolicValue tau1p = SymbolicValue::term(3, Mono(0b001), make_constant(1.0));
  tau1p += SymbolicValue::term(3, Mono(0b010), exp_bt(params.b, "t1"));
  SymbolicValue tau2p = SymbolicValue::term(3, Mono(0b100), make_constant(1.0));

  std::vector<SuperFunction> pulls;
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(t1p));
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(t2p));
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(tau1p));
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(tau2p));
  return MorphismData(ggg, gg, {}, std::move(pulls));
}

MorphismData group_id_times_mu(const SupergroupParams& params, EvalMode mode) {
  params.validate();
  SuperDomain ggg = group_cube(mode);
  SuperDomain gg = group_square(mode);

  SymbolicValue t1p = SymbolicValue::constant(3, make_variable("t1"));
  SymbolicValue t2p =
      SymbolicValue::constant(3, make_variable("t2") + make_variable("t3"));
  t2p += SymbolicValue::term(3, Mono(0b110), make_constant(params.a));
  SymbolicValue tau1p = SymbolicValue::term(3, Mono(0b001), make_constant(1.0));
  SymbolicValue tau2p = SymbolicValue::term(3, Mono(0b010), make_constant(1.0));
  tau2p += SymbolicValue::term(3, Mono(0b100), exp_bt(params.b, "t2"));

  std::vector<SuperFunction> pulls;
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(t1p));
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(t2p));
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(tau1p));
  pulls.emplace_back(ggg, std::vector<std::string>{}, std::move(tau2p));
  return MorphismData(ggg, gg, {}, std::move(pulls));
}

MorphismData group_unit_first(EvalMode mode) {
  SuperDomain g = group_chart(mode);
  SuperDomain gg = group_square(mode);
  std::vector<SuperFunction> pulls;
  pulls.emplace_back(g, std::vector<std::string>{},
                     SymbolicValue::constant(1, make_constant(0.0)));
  pulls.emplace_back(g, std::vector<std::string>{},
                     SymbolicValue::constant(1, make_variable("t")));
  pulls.emplace_back(g, std::vector<std::string>{}, SymbolicValue(1));
  pulls.emplace_back(g, std::vector<std::string>{},
                     SymbolicValue::term(1, Mono(0b1), make_constant(1.0)));
  return MorphismData(g, gg, {}, std::move(pulls));
}

MorphismData group_unit_second(EvalMode mode) {
  SuperDomain g = group_chart(mode);
  SuperDomain gg = group_square(mode);
  std::vector<SuperFunction> pulls;
  pulls.emplace_back(g, std::vector<std::string>{},
                     SymbolicValue::constant(1, make_variable("t")));
  pulls.emplace_back(g, std::vector<std::string>{},
                     SymbolicValue::constant(1, make_constant(0.0)));
  pulls.emplace_back(g, std::vector<std::string>{},
                     SymbolicValue::term(1, Mono(0b1), make_constant(1.0)));
  pulls.emplace_back(g, std::vector<std::string>{}, SymbolicValue(1));
  return MorphismData(g, gg, {}, std::move(pulls));
}

// ---------------------------------------------------------------------------
// Right-invariant frame
// ---------------------------------------------------------------------------

namespace {

bool superfunction_vanishes(const SuperFunction& f, const ZeroTester& zt) {
  for (const auto& [m, c] : f.value().terms()) {
    (void)m;
    if (!zt.is_zero(c, f.domain().even_names())) return false;
  }
  return true;
}

}  // namespace

std::pair<SuperVectorField, SuperVectorField> right_invariant_fields(
    const SupergroupParams& params, EvalMode mode) {
  params.validate();
  SuperDomain g = group_chart(mode);

  // D0 = d/dt + b tau d/dtau
  std::vector<SymbolicValue> d0(2, SymbolicValue(1));
  d0[0] = SymbolicValue::constant(1, make_constant(1.0));
  d0[1] = SymbolicValue::term(1, Mono(0b1), make_constant(params.b));
  SuperVectorField D0(g, std::move(d0));

  // D1 = d/dtau + a tau d/dt
  std::vector<SymbolicValue> d1(2, SymbolicValue(1));
  d1[0] = SymbolicValue::term(1, Mono(0b1), make_constant(params.a));
  d1[1] = SymbolicValue::constant(1, make_constant(1.0));
  SuperVectorField D1(g, std::move(d1));

  // Internal consistency: mu* . Z = (Z x id) . mu* on both coordinates,
  // with Z lifted to the first factor of G x G.
  MorphismData mu = mu_pullback(params, mode);
  SuperDomain gg = group_square(mode);

  std::vector<SymbolicValue> l0(4, SymbolicValue(2));
  l0[0] = SymbolicValue::constant(2, make_constant(1.0));
  l0[2] = SymbolicValue::term(2, Mono(0b01), make_constant(params.b));
  SuperVectorField L0(gg, std::move(l0));

  std::vector<SymbolicValue> l1(4, SymbolicValue(2));
  l1[0] = SymbolicValue::term(2, Mono(0b01), make_constant(params.a));
  l1[2] = SymbolicValue::constant(2, make_constant(1.0));
  SuperVectorField L1(gg, std::move(l1));

  ZeroTester zt;
  const std::pair<const SuperVectorField*, const SuperVectorField*> frame[2] = {
      {&D0, &L0}, {&D1, &L1}};
  for (const auto& [z, lz] : frame) {
    for (int j = 0; j < 2; ++j) {
      SuperFunction coord = SuperFunction::coordinate(g, j);
      SuperFunction lhs = pullback_superfunction(mu, apply_field(*z, coord));
      SuperFunction rhs = apply_field(*lz, pullback_superfunction(mu, coord));
      if (!superfunction_vanishes(lhs - rhs, zt))
        throw std::logic_error("right-invariance check failed for the frame");
    }
  }
  return {std::move(D0), std::move(D1)};
}

// ---------------------------------------------------------------------------
// Bracket criterion
// ---------------------------------------------------------------------------

namespace {

struct RatioSolve {
  bool consistent = false;
  Scalar lambda = 0.0;
};

// Look for a constant lambda with N = lambda * D by evaluating all paired
// component coefficients at seeded random points and dividing through the
// largest-denominator pair.  The caller re-validates with a full residue
// zero test; this only has to produce the right candidate.
RatioSolve solve_ratio(const SuperVectorField& N, const SuperVectorField& D,
                       const ZeroTester& zt) {
  struct Pair {
    ExprPtr n, d;  // either may be null (identically zero)
  };
  std::vector<Pair> pairs;
  for (int j = 0; j < N.domain().coordinates(); ++j) {
    std::map<Mono, Pair> merged;
    for (const auto& [m, c] : N.component(j).terms()) merged[m].n = c;
    for (const auto& [m, c] : D.component(j).terms()) merged[m].d = c;
    for (auto& [m, pr] : merged) {
      (void)m;
      pairs.push_back(pr);
    }
  }
  if (pairs.empty()) return {};

  const auto& vars = N.domain().even_names();
  const EvalMode mode = N.domain().mode();
  std::mt19937_64 rng(zt.seed);
  std::uniform_real_distribution<double> dist(zt.lo, zt.hi);

  std::vector<Scalar> lambdas;
  int attempts = 0;
  while (static_cast<int>(lambdas.size()) < 8 && attempts++ < 200) {
    VariableContext ctx;
    for (const auto& v : vars) ctx.bind(v, dist(rng));
    Scalar best_n = 0.0, best_d = 0.0;
    double best_mag = 0.0, max_num = 0.0;
    bool failed = false;
    for (const Pair& pr : pairs) {
      Scalar nv = 0.0, dv = 0.0;
      try {
        if (pr.n) nv = evaluate(pr.n, ctx, mode);
        if (pr.d) dv = evaluate(pr.d, ctx, mode);
      } catch (const EvalError&) {
        failed = true;
        break;
      }
      max_num = std::max(max_num, std::abs(nv));
      if (std::abs(dv) > best_mag) {
        best_mag = std::abs(dv);
        best_n = nv;
        best_d = dv;
      }
    }
    if (failed) continue;
    if (best_mag < 1e-9) {
      // D vanishes at this point; inconsistent if N does not.
      if (max_num > 1e-8) return {};
      continue;
    }
    lambdas.push_back(best_n / best_d);
  }
  if (lambdas.empty()) return {};
  for (const Scalar& l : lambdas)
    if (std::abs(l - lambdas.front()) > 1e-7 * std::max(1.0, std::abs(lambdas.front())))
      return {};
  return {true, lambdas.front()};
}

}  // namespace

SuperVectorField structure_residue_field(const SuperVectorField& X,
                                         const SupergroupParams& params) {
  auto [x0, x1] = X.parity_split();
  return x0.scaled(params.a) - super_bracket(x1, x1).scaled(Scalar(0.5)) +
         x1.scaled(params.b) - super_bracket(x1, x0);
}

CriterionReport find_action_params(const SuperVectorField& X,
                                   const ZeroTester& zt) {
  auto [x0, x1] = X.parity_split();
  SuperVectorField b1 = super_bracket(x1, x1);
  SuperVectorField b2 = super_bracket(x0, x1);

  const bool x0_zero = field_is_zero(x0, zt);
  const bool x1_zero = field_is_zero(x1, zt);

  Scalar a = 0.0, b = 0.0;
  bool ok_a = false, ok_b = false;
  std::string note;

  if (x1_zero) note += "odd part vanishes; (a, b) = (0, 0) chosen minimally. ";

  // [X1, X1] = 2 a X0
  if (field_is_zero(b1, zt)) {
    a = 0.0;
    ok_a = true;
    if (x0_zero && !x1_zero)
      note += "a is unconstrained (even part and [X1,X1] both vanish); 0 chosen. ";
  } else if (x0_zero) {
    note +=
        "[X1,X1] is nonzero while the even part vanishes, so no scalar a "
        "fits; extending the field by (1/2)[X1,X1] as its even part would "
        "make the flow an action. ";
  } else {
    RatioSolve rs = solve_ratio(b1, x0.scaled(Scalar(2.0)), zt);
    if (rs.consistent) {
      a = rs.lambda;
      ok_a = field_is_zero(b1 - x0.scaled(Scalar(2.0) * rs.lambda), zt);
    }
    if (!ok_a) note += "[X1,X1] is not a constant multiple of the even part. ";
  }

  // [X0, X1] = -b X1
  if (field_is_zero(b2, zt)) {
    b = 0.0;
    ok_b = true;
  } else if (x1_zero) {
    note += "[X0,X1] failed the zero test although X1 did not (borderline "
            "zero test); no b assigned. ";
  } else {
    RatioSolve rs = solve_ratio(b2, -x1, zt);
    if (rs.consistent) {
      b = rs.lambda;
      ok_b = field_is_zero(b2 + x1.scaled(rs.lambda), zt);
    }
    if (!ok_b) note += "[X0,X1] is not a constant multiple of the odd part. ";
  }

  CriterionReport::Status status = CriterionReport::Status::NoAction;
  if (ok_a && ok_b) {
    if (std::abs(a * b) > 1e-10) {
      note += "candidate parameters violate a*b = 0 (forced by the Jacobi "
              "identity); no action. ";
    } else {
      status = CriterionReport::Status::Action;
    }
  }

  return CriterionReport{status,
                         SupergroupParams{a, b},
                         b1 - x0.scaled(Scalar(2.0) * a),
                         b2 + x1.scaled(b),
                         std::move(note)};
}

// ---------------------------------------------------------------------------
// Strong flow equation
// ---------------------------------------------------------------------------

StrongFlowReport strong_flow_residual(const FlowResult& result,
                                      const SupergroupParams& params,
                                      std::span<const double> ts) {
  params.validate();
  if (result.is_path())
    throw FlowError("the strong-flow check runs on real-mode results");
  const CoefficientSystem& sys = result.system();
  const SuperDomain& w = sys.target();
  const SuperVectorField& X = result.problem().field;
  auto [x0, x1] = X.parity_split();
  SuperVectorField R = structure_residue_field(X, params);

  const int live = sys.live_gens();
  const int p = w.even_dim();
  const int nc = w.coordinates();

  // Per coordinate: X(w_j), X0(X1(w_j)) (the t-derivative of the g-part),
  // and R(w_j).
  std::vector<SuperFunction> xw, dgw, rw;
  for (int j = 0; j < nc; ++j) {
    xw.push_back(X.component_function(j));
    dgw.push_back(apply_field(x0, x1.component_function(j)));
    rw.push_back(R.component_function(j));
  }

  StrongFlowReport rep;
  GrassmannValue tau = GrassmannValue::generator(live + 1, live + 1, 1.0);
  for (double t : ts) {
    FlowSample s = result.sample(t);
    auto fdot = sys.assemble(result.rhs_at(t));
    PointMorphism bare = sys.point_morphism(s.state);

    PointMorphism full;
    full.target = &w;
    for (int mu = 0; mu < p; ++mu) full.even_pull.push_back(s.full(mu));
    for (int j = p; j < nc; ++j) full.odd_pull.push_back(s.full(j));

    for (int j = 0; j < nc; ++j) {
      GrassmannValue lhs =
          (fdot[static_cast<std::size_t>(j)] + s.g[static_cast<std::size_t>(j)])
              .adjoin_generators(1);
      GrassmannValue tpart = bare.pull_function(dgw[static_cast<std::size_t>(j)]);
      tpart += fdot[static_cast<std::size_t>(j)].scaled(params.a);
      tpart += s.g[static_cast<std::size_t>(j)].scaled(params.b);
      lhs += tau * tpart.adjoin_generators(1);

      GrassmannValue rhs = full.pull_function(xw[static_cast<std::size_t>(j)]);
      GrassmannValue robs = bare.pull_function(rw[static_cast<std::size_t>(j)]);
      rep.action_residual = std::max(rep.action_residual, sup_norm(robs));
      rhs += tau * robs.adjoin_generators(1);

      rep.identity_residual =
          std::max(rep.identity_residual, max_abs_diff(lhs, rhs));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Local-action identity
// ---------------------------------------------------------------------------

namespace {

std::string fresh_aux_name(const MorphismData& phi, std::string base) {
  auto taken = [&](const std::string& name) {
    for (const auto& v : phi.source().even_names())
      if (v == name) return true;
    for (const auto& v : phi.source().odd_names())
      if (v == name) return true;
    for (const auto& v : phi.aux())
      if (v == name) return true;
    return false;
  };
  while (taken(base)) base += "_";
  return base;
}

}  // namespace

LocalActionReport verify_local_action(
    const FlowResult& result, const SupergroupParams& params,
    std::span<const std::pair<double, double>> time_pairs) {
  params.validate();
  if (result.is_path())
    throw FlowError("the local-action check runs on real-mode results");
  const CoefficientSystem& sys = result.system();
  const int live = sys.live_gens();
  const int nc = sys.target().coordinates();

  LocalActionReport rep;
  GrassmannValue tau1 = GrassmannValue::generator(live + 2, live + 2, 1.0);
  GrassmannValue tau2 = GrassmannValue::generator(live + 2, live + 1, 1.0);

  for (const auto& [t1, t2] : time_pairs) {
    const double tt = t1 + t2;
    if (!result.contains_time(t2) || !result.contains_time(tt))
      throw FlowError("local-action sample times leave the computed interval");

    // (id x F)* . F*: flow to t2, keep tau2, restart and flow to t1; the
    // sample's own tau slot then plays the role of tau1.
    FlowSample s2 = result.sample(t2);
    std::string tau2_name = fresh_aux_name(result.problem().initial, "tau2");
    MorphismData restart = sample_as_morphism(result, s2, true, tau2_name);
    FlowProblem hop{result.problem().field, restart, Scalar(0.0)};
    ODESettings st = result.settings();
    st.horizon = std::max(std::abs(t1), 1e-6);
    FlowResult leg = integrate_flow(hop, result.base_point(), st);
    if (!leg.contains_time(t1))
      throw FlowError(std::string("restarted flow stopped before t1 (") +
                      to_string(t1 >= 0 ? leg.stop_reason_forward()
                                        : leg.stop_reason_backward()) +
                      ")");
    FlowSample s1 = leg.sample(t1);

    // (mu x id)* . F*: evaluate at t1+t2 and substitute
    //   t   <- t1 + t2 + a tau1 tau2   (exactly, via the recorded RHS)
    //   tau <- tau1 + exp(b t1) tau2.
    FlowSample st_sum = result.sample(tt);
    auto fdot = sys.assemble(result.rhs_at(tt));
    const Scalar ebt1 = std::exp(params.b * t1);

    double worst = 0.0;
    for (int j = 0; j < nc; ++j) {
      GrassmannValue lhs = s1.full(j);
      GrassmannValue rhs =
          st_sum.f[static_cast<std::size_t>(j)].adjoin_generators(2);
      rhs += (tau1 * tau2 * fdot[static_cast<std::size_t>(j)].adjoin_generators(2))
                 .scaled(params.a);
      rhs += (tau1 + tau2.scaled(ebt1)) *
             st_sum.g[static_cast<std::size_t>(j)].adjoin_generators(2);
      worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
    if (worst > rep.max_difference) {
      rep.max_difference = worst;
      rep.worst_t1 = t1;
      rep.worst_t2 = t2;
    }
    ++rep.pairs_checked;
  }
  return rep;
}

}  // namespace superflow
