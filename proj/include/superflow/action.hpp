#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "superflow/flow.hpp"
#include "superflow/supergeometry.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// The two-parameter family of supergroup structures mu_{a,b} on the
// (1|1)-dimensional chart (t | tau):
//   mu*(t)   = t1 + t2 + a tau1 tau2,
//   mu*(tau) = tau1 + exp(b t1) tau2,
// subject to a*b = 0.
// ---------------------------------------------------------------------------

struct SupergroupParams {
  Scalar a = 0.0;
  Scalar b = 0.0;

  // Throws FlowError unless |a*b| <= 1e-12.
  void validate() const;
};

// The group chart (t | tau), its square (t1, t2 | tau1, tau2), and its cube
// (t1, t2, t3 | tau1, tau2, tau3).  Odd generators are numbered in the
// listed order.
SuperDomain group_chart(EvalMode mode = EvalMode::Real);
SuperDomain group_square(EvalMode mode = EvalMode::Real);
SuperDomain group_cube(EvalMode mode = EvalMode::Real);

// The multiplication morphism mu: G x G -> G for mu_{a,b}.
MorphismData mu_pullback(const SupergroupParams& params,
                         EvalMode mode = EvalMode::Real);

// mu x id and id x mu as morphisms G^3 -> G^2 (for associativity checks),
// and the unit inclusions G -> G^2 placing the neutral element in the
// first or second slot (for the unit laws).
MorphismData group_mu_times_id(const SupergroupParams& params,
                               EvalMode mode = EvalMode::Real);
MorphismData group_id_times_mu(const SupergroupParams& params,
                               EvalMode mode = EvalMode::Real);
MorphismData group_unit_first(EvalMode mode = EvalMode::Real);
MorphismData group_unit_second(EvalMode mode = EvalMode::Real);

// The right-invariant frame D0 = d/dt + b tau d/dtau, D1 = d/dtau +
// a tau d/dt on the group chart.  Verifies mu* . Z = (Z x id) . mu* on the
// coordinate functions symbolically and throws std::logic_error if that
// internal consistency check ever fails.
std::pair<SuperVectorField, SuperVectorField> right_invariant_fields(
    const SupergroupParams& params, EvalMode mode = EvalMode::Real);

// ---------------------------------------------------------------------------
// Bracket criterion: find (a, b) with [X1, X1] = 2 a X0 and
// [X0, X1] = -b X1, if they exist.
// ---------------------------------------------------------------------------

struct CriterionReport {
  enum class Status { Action, NoAction };

  Status status;
  SupergroupParams params;       // best-effort values even when NoAction
  SuperVectorField residue_a;    // [X1, X1] - 2 a X0
  SuperVectorField residue_b;    // [X0, X1] + b X1
  std::string note;

  bool is_action() const { return status == Status::Action; }
};

CriterionReport find_action_params(const SuperVectorField& X,
                                   const ZeroTester& zt = {});

// The obstruction field R_{a,b} = a X0 - (1/2)[X1, X1] + b X1 - [X1, X0];
// the flow is a local mu_{a,b}-action iff its pullback along the flow
// vanishes.
SuperVectorField structure_residue_field(const SuperVectorField& X,
                                         const SupergroupParams& params);

// ---------------------------------------------------------------------------
// Strong flow equation: at each sampled t the identity
//   (d/dt + d/dtau + tau (a d/dt + b d/dtau)) F*(w) - F*(X(w))
//     = tau . F*(R_{a,b}(w))
// holds unconditionally; the action itself holds iff the right-hand side
// vanishes.  Both sides are evaluated numerically on the sampled
// morphism; identity_residual should sit at integration accuracy for any
// field, action_residual is the decision quantity.
// ---------------------------------------------------------------------------

struct StrongFlowReport {
  double identity_residual = 0.0;  // max |LHS - RHS| over samples/monomials
  double action_residual = 0.0;    // max ||F*(R_{a,b}(w_j))|| over samples
};

StrongFlowReport strong_flow_residual(const FlowResult& result,
                                      const SupergroupParams& params,
                                      std::span<const double> ts);

// ---------------------------------------------------------------------------
// Local-action identity with two auxiliary odd parameters: for sampled
// (t1, t2) compare
//   G* = (id x F)* . F*   (flow to t2, restart carrying tau2, flow to t1)
//   H* = (mu x id)* . F*  (flow to t1+t2, substituted through mu_{a,b})
// coefficient by coefficient over the generators (source odd, tau2, tau1).
// The substitution t <- t1+t2+a tau1 tau2 is expanded exactly as
// f(t1+t2) + a f'(t1+t2) tau1 tau2 with f' taken from the hierarchy
// right-hand side.
// ---------------------------------------------------------------------------

struct LocalActionReport {
  double max_difference = 0.0;
  int pairs_checked = 0;
  double worst_t1 = 0.0, worst_t2 = 0.0;
};

LocalActionReport verify_local_action(
    const FlowResult& result, const SupergroupParams& params,
    std::span<const std::pair<double, double>> time_pairs);

}  // namespace superflow
