#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "superflow/flow.hpp"

using namespace superflow;

namespace {

ExprPtr ex(const std::string& text) { return parse_expression(text); }

SuperVectorField field_1_1(const std::string& comp_x,
                           const std::string& comp_xi,
                           SuperDomain dom = SuperDomain({"x"}, {"xi"},
                                                         EvalMode::Real)) {
  std::vector<SymbolicValue> comps{
      parse_superfunction(comp_x, dom).value(),
      parse_superfunction(comp_xi, dom).value()};
  return SuperVectorField(dom, comps);
}

// The running example: X = (1 + xi) d/dx + d/dxi with the closed-form flow
//   F*(x) = x + t + tau xi,   F*(xi) = xi + tau.
SuperVectorField shift_pair_field() { return field_1_1("1 + xi", "1"); }

FlowProblem identity_problem(const SuperVectorField& X, Scalar t0 = 0.0) {
  return FlowProblem{X, MorphismData::identity(X.domain()), t0};
}

}  // namespace

TEST_CASE("coefficient layout tracks matching parity only") {
  SuperDomain dom({"x"}, {"xi1", "xi2"}, EvalMode::Real);
  CoefficientSystem sys(SuperVectorField::zero(dom), 2);
  // (p + q) * 2^{n-1} = 3 * 2
  CHECK(sys.dim() == 6);
  CHECK(sys.index_of(0, 0b00) >= 0);
  CHECK(sys.index_of(0, 0b11) >= 0);
  CHECK(sys.index_of(0, 0b01) == -1);  // odd monomial on an even coordinate
  CHECK(sys.index_of(1, 0b01) >= 0);
  CHECK(sys.index_of(1, 0b00) == -1);
  for (const auto& lab : sys.labels())
    CHECK(mono_parity(lab.mono) == dom.coordinate_parity(lab.coordinate));
}

TEST_CASE("initial state samples the initial morphism") {
  SuperDomain dom({"x"}, {"xi1", "xi2"}, EvalMode::Real);
  CoefficientSystem sys(SuperVectorField::zero(dom), 2);
  MorphismData id = MorphismData::identity(dom);
  std::vector<Scalar> y = sys.initial_state(id, std::vector<Scalar>{Scalar(0.7)});
  CHECK(y[sys.index_of(0, 0b00)] == Scalar(0.7));
  CHECK(y[sys.index_of(1, 0b01)] == Scalar(1.0));
  CHECK(y[sys.index_of(2, 0b10)] == Scalar(1.0));
  CHECK(y[sys.index_of(0, 0b11)] == Scalar(0.0));
  CHECK(y[sys.index_of(1, 0b10)] == Scalar(0.0));

  // non-identity initial data picks up its coefficients
  MorphismData twisted(dom, dom, {},
                       {parse_superfunction("x + 2*xi1*xi2", dom),
                        parse_superfunction("3*xi2", dom),
                        parse_superfunction("xi1", dom)});
  std::vector<Scalar> z =
      sys.initial_state(twisted, std::vector<Scalar>{Scalar(0.5)});
  CHECK(z[sys.index_of(0, 0b11)] == Scalar(2.0));
  CHECK(z[sys.index_of(1, 0b10)] == Scalar(3.0));
  CHECK(z[sys.index_of(2, 0b01)] == Scalar(1.0));
}

TEST_CASE("linear even field integrates to the exponential") {
  SuperDomain dom({"x"}, {}, EvalMode::Real);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("x"))};
  FlowProblem prob = identity_problem(SuperVectorField(dom, comps));
  ODESettings st;
  st.horizon = 2.0;
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(1.0)}, st);
  CHECK(res.t_max() == doctest::Approx(2.0));
  CHECK(res.t_min() == doctest::Approx(-2.0));
  CHECK(to_string(res.stop_reason_forward()) == std::string("completed"));
  for (double t : {-1.7, -0.3, 0.0, 0.9, 2.0}) {
    std::vector<Scalar> y = res.state_at(t);
    CHECK(std::abs(y[0] - Scalar(std::exp(t))) < 1e-8);
  }
  // the interpolant's derivative tracks the vector field
  auto samples = take_samples(res, std::vector<double>{-1.1, 0.2, 1.3});
  FlowEquationReport rep = verify_flow_equations(res, samples);
  CHECK(rep.max_residual() < 1e-7);
}

TEST_CASE("running example matches its closed form") {
  FlowProblem prob = identity_problem(shift_pair_field());
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(0.25)});
  for (double t : {-0.8, -0.1, 0.0, 0.4, 1.5}) {
    FlowSample s = res.sample(t);
    // f-parts
    CHECK(std::abs(s.f[0].coefficient(0b0) - Scalar(0.25 + t)) < 1e-10);
    CHECK(std::abs(s.f[1].coefficient(0b1) - Scalar(1.0)) < 1e-10);
    // g-parts: g_x = xi, g_xi = 1
    CHECK(std::abs(s.g[0].coefficient(0b1) - Scalar(1.0)) < 1e-10);
    CHECK(std::abs(s.g[1].coefficient(0b0) - Scalar(1.0)) < 1e-10);
    // tau-extended samples multiply tau from the left: tau xi = -(xi tau)
    GrassmannValue full_x = s.full(0);
    CHECK(std::abs(full_x.coefficient(0b00) - Scalar(0.25 + t)) < 1e-10);
    CHECK(std::abs(full_x.coefficient(0b11) - Scalar(-1.0)) < 1e-10);
    GrassmannValue full_xi = s.full(1);
    CHECK(std::abs(full_xi.coefficient(0b01) - Scalar(1.0)) < 1e-10);
    CHECK(std::abs(full_xi.coefficient(0b10) - Scalar(1.0)) < 1e-10);
  }
}

TEST_CASE("nilpotent even field moves the soul exactly") {
  // X = xi1 xi2 d/dx: F*(x) = x + t xi1 xi2, odd coordinates frozen.
  SuperDomain dom({"x"}, {"xi1", "xi2"}, EvalMode::Real);
  std::vector<SymbolicValue> comps(3, SymbolicValue(2));
  comps[0] = SymbolicValue::term(2, 0b11, make_constant(1.0));
  FlowProblem prob = identity_problem(SuperVectorField(dom, comps));
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(0.1)});
  FlowSample s = res.sample(3.0);
  CHECK(std::abs(s.f[0].coefficient(0b00) - Scalar(0.1)) < 1e-10);
  CHECK(std::abs(s.f[0].coefficient(0b11) - Scalar(3.0)) < 1e-10);
  CHECK(std::abs(s.f[1].coefficient(0b01) - Scalar(1.0)) < 1e-12);
  CHECK(std::abs(s.f[2].coefficient(0b10) - Scalar(1.0)) < 1e-12);
  for (int j = 0; j < 3; ++j) CHECK(sup_norm(s.g[j]) < 1e-12);
}

TEST_CASE("coupled soul dynamics stay accurate") {
  // X = (x + xi1 xi2) d/dx on R^{1|2}:
  //   body: b' = b -> b = x e^t
  //   soul: s' = s + b ... wait, (x + s xi1 xi2)' pulled back:
  //   f' = f + s, s' = s + ... closed form worked out below.
  // Writing F*(x) = B(t) + S(t) xi1 xi2:
  //   B' = B, S' = S + 1 (coefficient of the pullback of x + xi1 xi2):
  //   F^*(x + xi1 xi2) = B + S xi1 xi2 + (F*(xi1) F*(xi2) = xi1 xi2).
  //   B(t) = x e^t, S(t) = e^t - 1.
  SuperDomain dom({"x"}, {"xi1", "xi2"}, EvalMode::Real);
  std::vector<SymbolicValue> comps(3, SymbolicValue(2));
  comps[0] = SymbolicValue::constant(2, ex("x")) +
             SymbolicValue::term(2, 0b11, make_constant(1.0));
  FlowProblem prob = identity_problem(SuperVectorField(dom, comps));
  ODESettings st;
  st.horizon = 1.5;
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(0.6)}, st);
  for (double t : {-1.2, 0.3, 1.5}) {
    FlowSample s = res.sample(t);
    CHECK(std::abs(s.f[0].coefficient(0b00) - Scalar(0.6 * std::exp(t))) <
          1e-8);
    CHECK(std::abs(s.f[0].coefficient(0b11) - Scalar(std::exp(t) - 1.0)) <
          1e-8);
  }
  auto samples = take_samples(res, std::vector<double>{-0.9, 0.0, 1.2});
  CHECK(verify_flow_equations(res, samples).max_residual() < 1e-7);
}

TEST_CASE("initial morphisms with auxiliaries flow consistently") {
  // Start from the tau-extended sample of the running example: the
  // auxiliary generator rides along as a spectator.
  FlowProblem prob = identity_problem(shift_pair_field());
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(0.0)});
  FlowSample s1 = res.sample(0.3);
  MorphismData phi = sample_as_morphism(res, s1, true, "tau1");
  CHECK(phi.aux() == std::vector<std::string>{"tau1"});
  CHECK(phi.source_gens() == 2);

  FlowProblem restarted{prob.field, phi, 0.0};
  FlowResult res2 = integrate_flow(restarted, std::vector<Scalar>{Scalar(0.0)});
  FlowSample s2 = res2.sample(0.5);
  // F*(x) at t = 0.8 from scratch: x + 0.8 + tau xi; restarting carries
  // tau1 from the first leg: coefficient layout over (xi, tau1).
  CHECK(std::abs(s2.f[0].coefficient(0b00) - Scalar(0.8)) < 1e-9);
  // the tau1 xi coefficient survives the restart
  CHECK(std::abs(s2.f[0].coefficient(0b11) - Scalar(-1.0)) < 1e-9);
  // and the fresh g-part is the same xi as always
  CHECK(std::abs(s2.g[0].coefficient(0b01) - Scalar(1.0)) < 1e-9);
}

TEST_CASE("stop reasons: horizon, chart exit, blow-up, max steps") {
  // horizon
  SuperDomain dom({"x"}, {}, EvalMode::Real);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("1"))};
  SuperVectorField X(dom, comps);
  ODESettings st;
  st.horizon = 0.5;
  FlowResult horizon =
      integrate_flow(identity_problem(X), std::vector<Scalar>{Scalar(0.0)}, st);
  CHECK(horizon.stop_reason_forward() == StopReason::Horizon);
  CHECK(horizon.t_max() == 0.5);

  // chart exit localizes the boundary crossing
  SuperDomain boxed({"x"}, {}, EvalMode::Real);
  boxed.set_box("x", -1.0, 1.0);
  std::vector<SymbolicValue> comps_b{SymbolicValue::constant(0, ex("1"))};
  FlowResult exits = integrate_flow(
      identity_problem(SuperVectorField(boxed, comps_b)),
      std::vector<Scalar>{Scalar(0.0)});
  CHECK(exits.stop_reason_forward() == StopReason::ChartExit);
  CHECK(exits.t_max() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(exits.t_min() == doctest::Approx(-1.0).epsilon(1e-9));

  // blow-up / step collapse at a pole
  std::vector<SymbolicValue> comps_q{SymbolicValue::constant(0, ex("x^2"))};
  FlowResult pole = integrate_flow(
      identity_problem(SuperVectorField(dom, comps_q)),
      std::vector<Scalar>{Scalar(2.0)});
  CHECK((pole.stop_reason_forward() == StopReason::Blowup ||
         pole.stop_reason_forward() == StopReason::StepUnderflow));
  CHECK(pole.t_max() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(pole.stop_reason_backward() == StopReason::Horizon);

  // max steps
  ODESettings tiny;
  tiny.max_steps = 3;
  tiny.max_step = 0.1;
  FlowResult capped =
      integrate_flow(identity_problem(X), std::vector<Scalar>{Scalar(0.0)}, tiny);
  CHECK(capped.stop_reason_forward() == StopReason::MaxSteps);

  CHECK(to_string(StopReason::Horizon) == std::string("completed"));
  CHECK(to_string(StopReason::ChartExit) == std::string("chart-exit"));
}

TEST_CASE("invalid settings and mode mismatches are rejected") {
  SuperDomain dom({"x"}, {}, EvalMode::Real);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("1"))};
  FlowProblem prob = identity_problem(SuperVectorField(dom, comps));

  ODESettings st;
  st.rtol = -1.0;
  CHECK_THROWS_AS(integrate_flow(prob, std::vector<Scalar>{Scalar(0.0)}, st),
                  FlowError);
  ODESettings st2;
  st2.horizon = 0.0;
  CHECK_THROWS_AS(integrate_flow(prob, std::vector<Scalar>{Scalar(0.0)}, st2),
                  FlowError);

  // complex charts need a path
  SuperDomain cdom({"w"}, {}, EvalMode::Complex);
  std::vector<SymbolicValue> ccomps{SymbolicValue::constant(0, ex("w"))};
  FlowProblem cprob = identity_problem(SuperVectorField(cdom, ccomps));
  CHECK_THROWS_AS(integrate_flow(cprob, std::vector<Scalar>{Scalar(1.0)}),
                  FlowError);
  // and real charts refuse paths
  CHECK_THROWS_AS(
      integrate_along_path(prob, std::vector<Scalar>{Scalar(0.0)},
                           std::vector<Scalar>{Scalar(0.0), Scalar(1.0)}),
      FlowError);
  // paths must start at z0
  CHECK_THROWS_AS(
      integrate_along_path(cprob, std::vector<Scalar>{Scalar(1.0)},
                           std::vector<Scalar>{Scalar(0.5), Scalar(1.0)}),
      FlowError);
  // initial body point must sit in the chart
  SuperDomain boxed({"x"}, {}, EvalMode::Real);
  boxed.set_box("x", -1.0, 1.0);
  std::vector<SymbolicValue> comps_b{SymbolicValue::constant(0, ex("1"))};
  FlowProblem bprob = identity_problem(SuperVectorField(boxed, comps_b));
  CHECK_THROWS_AS(integrate_flow(bprob, std::vector<Scalar>{Scalar(4.0)}),
                  FlowError);
}

TEST_CASE("path integration reproduces the real-line flow") {
  // w' = w^2 along the segment [0, 0.8] matches 1/(1/w0 - z).
  SuperDomain cdom({"w"}, {}, EvalMode::Complex);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("w^2"))};
  FlowProblem prob = identity_problem(SuperVectorField(cdom, comps));
  std::vector<Scalar> path{Scalar(0.0), Scalar(0.8)};
  FlowResult res =
      integrate_along_path(prob, std::vector<Scalar>{Scalar(1.0)}, path);
  CHECK(res.is_path());
  CHECK(res.s_end() == doctest::Approx(1.0));
  FlowSample s = res.sample_path(1.0);
  CHECK(std::abs(s.f[0].coefficient(0) - Scalar(5.0)) < 1e-8);
  // halfway down the segment: z = 0.4
  FlowSample h = res.sample_path(0.5);
  CHECK(std::abs(h.f[0].coefficient(0) - Scalar(1.0 / 0.6)) < 1e-8);
  CHECK(std::abs(res.z_at(0.5) - Scalar(0.4)) < 1e-15);

  // a two-segment detour through the upper half plane lands on the same
  // value (the flow is path-independent in a simply connected region)
  std::vector<Scalar> detour{Scalar(0.0), Scalar(0.4, 0.3), Scalar(0.8)};
  FlowResult res2 =
      integrate_along_path(prob, std::vector<Scalar>{Scalar(1.0)}, detour);
  FlowSample s2 = res2.sample_path(2.0);
  CHECK(std::abs(s2.f[0].coefficient(0) - Scalar(5.0)) < 1e-8);
}

TEST_CASE("monodromy vanishes on contractible loops and needs closure") {
  SuperDomain cdom({"w"}, {}, EvalMode::Complex);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("w^2"))};
  FlowProblem prob = identity_problem(SuperVectorField(cdom, comps));
  std::vector<Scalar> loop{Scalar(0.0), Scalar(0.2, -0.2), Scalar(0.4),
                           Scalar(0.2, 0.2), Scalar(0.0)};
  MonodromyReport rep =
      monodromy(prob, std::vector<Scalar>{Scalar(1.0)}, loop);
  CHECK(rep.max_abs < 1e-9);
  REQUIRE(rep.labels.size() == 1);
  CHECK(rep.labels[0].coordinate == 0);

  std::vector<Scalar> open{Scalar(0.0), Scalar(0.3), Scalar(0.6)};
  CHECK_THROWS_AS(monodromy(prob, std::vector<Scalar>{Scalar(1.0)}, open),
                  FlowError);
}

TEST_CASE("series oracle reproduces simple flows") {
  // X = x d/dx: the order-K series of x e^t.
  SuperDomain dom({"x"}, {}, EvalMode::Real);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("x"))};
  SuperVectorField X(dom, comps);
  MorphismData id = MorphismData::identity(dom);
  LieSeries series(X, id, 14);
  OracleSample s = series.eval(Scalar(0.3), std::vector<Scalar>{Scalar(2.0)});
  CHECK(std::abs(s.f[0].coefficient(0) - Scalar(2.0 * std::exp(0.3))) < 1e-12);

  // with an odd part: the running example has the exact degree-1 series
  SuperVectorField shift = shift_pair_field();
  LieSeries s2(shift, MorphismData::identity(shift.domain()), 6);
  OracleSample at = s2.eval(Scalar(0.2), std::vector<Scalar>{Scalar(0.5)});
  CHECK(std::abs(at.f[0].coefficient(0b0) - Scalar(0.7)) < 1e-14);
  CHECK(std::abs(at.g[0].coefficient(0b1) - Scalar(1.0)) < 1e-14);
  CHECK(std::abs(at.g[1].coefficient(0b0) - Scalar(1.0)) < 1e-14);

  FlowResult res = integrate_flow(identity_problem(shift),
                                  std::vector<Scalar>{Scalar(0.5)});
  double dev = oracle_deviation(res, s2,
                                std::vector<double>{-0.25, 0.0, 0.2});
  CHECK(dev < 1e-10);

  // guard rails: the oracle needs the identity and polynomial coefficients
  SuperDomain dom2({"x"}, {"xi"}, EvalMode::Real);
  CHECK_THROWS_AS(LieSeries(field_1_1("exp(x)", "0", dom2),
                            MorphismData::identity(dom2), 4),
                  EvalError);
  MorphismData shifted(dom2, dom2, {},
                       {parse_superfunction("x + 1", dom2),
                        parse_superfunction("xi", dom2)});
  CHECK_THROWS_AS(LieSeries(field_1_1("1", "1", dom2), shifted, 4),
                  DimensionError);
}

TEST_CASE("restarting from a sample is deterministic") {
  FlowProblem prob = identity_problem(shift_pair_field());
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(0.1)});
  const double t1 = 0.22, t2 = 0.31;
  FlowSample mid = res.sample(t1);
  MorphismData phi = sample_as_morphism(res, mid, false, "");
  FlowProblem leg{prob.field, phi, 0.0};
  FlowResult res2 = integrate_flow(leg, std::vector<Scalar>{Scalar(0.1)});
  FlowSample direct = res.sample(t1 + t2);
  FlowSample stitched = res2.sample(t2);
  for (int j = 0; j < 2; ++j) {
    CHECK(max_abs_diff(direct.f[j], stitched.f[j]) < 1e-8);
    CHECK(max_abs_diff(direct.g[j], stitched.g[j]) < 1e-8);
  }
}

TEST_CASE("dense output stays consistent between grid points") {
  // a stiff-ish oscillator to exercise the interpolant: x' = -y^3 - x ...
  // keep it scalar: x' = sin(x) from x0 = 1.
  SuperDomain dom({"x"}, {}, EvalMode::Real);
  std::vector<SymbolicValue> comps{SymbolicValue::constant(0, ex("sin(x)"))};
  FlowProblem prob = identity_problem(SuperVectorField(dom, comps));
  ODESettings st;
  st.horizon = 3.0;
  FlowResult res = integrate_flow(prob, std::vector<Scalar>{Scalar(1.0)}, st);
  // exact solution: x(t) = 2 atan(tan(x0/2) e^t)
  for (double t = -3.0; t <= 3.0; t += 0.37) {
    double want = 2.0 * std::atan(std::tan(0.5) * std::exp(t));
    CHECK(std::abs(res.state_at(t)[0] - Scalar(want)) < 1e-8);
  }
  std::vector<double> ts;
  for (double t = -2.9; t <= 2.9; t += 0.41) ts.push_back(t);
  auto samples = take_samples(res, ts);
  CHECK(verify_flow_equations(res, samples).max_residual() < 2e-6);
  CHECK(res.contains_time(3.0));
  CHECK(!res.contains_time(3.1));
}
