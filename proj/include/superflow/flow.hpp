#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "superflow/poly.hpp"
#include "superflow/supergeometry.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// Settings for the adaptive integrator.
// ---------------------------------------------------------------------------

struct ODESettings {
  double rtol = 1e-9;
  double atol = 1e-12;
  double max_step = 0.0;     // 0 = no explicit cap
  long max_steps = 1000000;  // per direction
  double chart_margin = 0.0; // tolerated excursion beyond the chart box
  double horizon = 10.0;     // how far from t0 each direction explores
  double blowup = 1e12;      // |coefficient| bound treated as divergence
  double underflow = 1e-13;  // step-underflow factor (times max(1,|t|))

  void validate() const;
};

enum class StopReason {
  Horizon,        // reached the configured horizon / end of the path
  Blowup,         // a coefficient exceeded the blow-up bound
  ChartExit,      // body point left the chart box by more than the margin
  StepUnderflow,  // adaptive step collapsed (singularity)
  MaxSteps,
};

const char* to_string(StopReason r);

// ---------------------------------------------------------------------------
// A flow problem: the field on the target chart, the initial morphism, and
// the initial parameter value (real t0, or the starting point z0 of a path
// in complex mode).
// ---------------------------------------------------------------------------

struct FlowProblem {
  SuperVectorField field;
  MorphismData initial;
  Scalar t0 = 0.0;

  EvalMode mode() const { return field.domain().mode(); }
};

// The state of one fiber at one parameter value: the base point, the
// parameter, and the flat vector of tracked coefficients.
struct FlowState {
  Scalar t = 0.0;
  std::vector<Scalar> x;
  std::vector<Scalar> f;
};

// ---------------------------------------------------------------------------
// Layout and right-hand side of the coefficient hierarchy.  The tracked
// unknowns are, for every target coordinate w_j, the coefficients f^j_I
// over all monomials I (in the source's live generators) whose parity
// equals |w_j|; the complementary-parity coefficients are identically zero
// and never stored.
// ---------------------------------------------------------------------------

class CoefficientSystem {
public:
  CoefficientSystem(SuperVectorField field, int live_gens);

  struct Label {
    int coordinate;  // target coordinate index
    Mono mono;       // source-generator monomial
  };

  int dim() const { return static_cast<int>(labels_.size()); }
  const std::vector<Label>& labels() const { return labels_; }
  int index_of(int coordinate, Mono mono) const;  // -1 when not tracked

  const SuperVectorField& field() const { return field_; }
  const SuperDomain& target() const { return field_.domain(); }
  int live_gens() const { return live_gens_; }
  EvalMode mode() const { return target().mode(); }

  // Initial state per the initial-condition rule: entry (j, I) is the
  // xi^I-coefficient of phi*(w_j) evaluated at the base point.
  std::vector<Scalar> initial_state(const MorphismData& phi,
                                    std::span<const Scalar> x) const;

  // d f / d t: the even-part hierarchy (pullback of X0 along the sampled
  // morphism, coefficient by coefficient).
  void rhs(std::span<const Scalar> f, std::span<Scalar> dfdt) const;

  // Pullbacks of the target coordinates as multivectors over the live
  // generators, assembled from a flat state.
  std::vector<GrassmannValue> assemble(std::span<const Scalar> f) const;

  // The algebraic odd part: g^j = pullback of X1(w_j) along the sampled
  // morphism.
  std::vector<GrassmannValue> odd_part(std::span<const Scalar> f) const;

  // Degree-0 coefficients of the even coordinates.
  std::vector<Scalar> body(std::span<const Scalar> f) const;

  // The sampled morphism as a numeric pullback engine.
  PointMorphism point_morphism(std::span<const Scalar> f) const;

private:
  GrassmannValue pull_component(const std::vector<GrassmannValue>& pulls,
                                const SymbolicValue& component) const;

  SuperVectorField field_;
  SuperVectorField x0_, x1_;
  int live_gens_;
  std::vector<Label> labels_;
  std::vector<std::vector<int>> index_;  // [coordinate][mono] -> flat index
  mutable std::map<const Expr*, DerivTable> tables_;
};

// Free-function form of the right-hand side.
std::vector<Scalar> hierarchy_rhs(const CoefficientSystem& sys,
                                  const FlowState& state);

// ---------------------------------------------------------------------------
// Dense output: accepted steps with their interpolation polynomials, plus
// the initial state as a fallback for zero-length runs.
// ---------------------------------------------------------------------------

class DenseOutput {
public:
  DenseOutput() = default;
  DenseOutput(double t0, std::vector<Scalar> y0, std::vector<Scalar> f0);

  void add_step(double t_start, double h, std::vector<Scalar> c1,
                std::vector<Scalar> c2, std::vector<Scalar> c3,
                std::vector<Scalar> c4, std::vector<Scalar> c5);
  void finalize();  // sort steps; call once after integration

  std::size_t dim() const { return y0_.size(); }
  double t_min() const;
  double t_max() const;
  bool covers(double t) const;

  std::vector<Scalar> eval(double t) const;
  std::vector<Scalar> derivative(double t) const;

private:
  struct Step {
    double t_start;
    double h;
    std::vector<Scalar> c1, c2, c3, c4, c5;
    double left() const { return h >= 0 ? t_start : t_start + h; }
    double right() const { return h >= 0 ? t_start + h : t_start; }
  };

  const Step* find(double t) const;

  double t0_ = 0.0;
  std::vector<Scalar> y0_, f0_;
  std::vector<Step> steps_;  // sorted by left endpoint after finalize()
};

// ---------------------------------------------------------------------------
// Samples and results
// ---------------------------------------------------------------------------

// F*(w_j) at one (t, x): multivectors over the live generators, f-part and
// g-part (the tau-coefficient).
struct FlowSample {
  Scalar t = 0.0;
  std::vector<Scalar> x;
  std::vector<Scalar> state;         // flat tracked coefficients
  std::vector<GrassmannValue> f, g;  // per target coordinate

  // f_j + tau * g_j over live+1 generators, tau appended last.
  GrassmannValue full(int j) const;
};

class FlowResult {
public:
  const FlowProblem& problem() const { return problem_; }
  const ODESettings& settings() const { return settings_; }
  const std::vector<Scalar>& base_point() const { return x_; }
  const CoefficientSystem& system() const { return *sys_; }
  const DenseOutput& dense() const { return dense_; }

  bool is_path() const { return path_mode_; }

  // Real mode: the detected parameter interval around t0.
  double t_min() const { return t_lo_; }
  double t_max() const { return t_hi_; }
  StopReason stop_reason_backward() const { return reason_lo_; }
  StopReason stop_reason_forward() const { return reason_hi_; }
  bool contains_time(double t) const;

  FlowSample sample(double t) const;          // real mode, flow parameter
  std::vector<Scalar> state_at(double t) const;
  // Time-derivative of the tracked coefficients at t, evaluated through
  // the hierarchy right-hand side on the sampled state.
  std::vector<Scalar> rhs_at(double t) const;

  // Path mode: parameter s in [0, segments]; z(s) walks the polyline.
  double s_end() const { return s_end_; }
  const std::vector<Scalar>& path() const { return path_; }
  Scalar z_at(double s) const;
  Scalar dz_at(double s) const;  // segment direction
  FlowSample sample_path(double s) const;

private:
  friend FlowResult integrate_flow(const FlowProblem&, std::span<const Scalar>,
                                   const ODESettings&);
  friend FlowResult integrate_along_path(const FlowProblem&,
                                         std::span<const Scalar>,
                                         std::span<const Scalar>,
                                         const ODESettings&);

  FlowResult(FlowProblem problem, ODESettings settings,
             std::vector<Scalar> x, std::shared_ptr<CoefficientSystem> sys)
      : problem_(std::move(problem)), settings_(settings), x_(std::move(x)),
        sys_(std::move(sys)) {}

  FlowSample make_sample(Scalar t_label, double s_query) const;

  FlowProblem problem_;
  ODESettings settings_;
  std::vector<Scalar> x_;
  std::shared_ptr<CoefficientSystem> sys_;
  DenseOutput dense_;
  bool path_mode_ = false;
  std::vector<Scalar> path_;  // polyline vertices (path mode)
  double s_end_ = 0.0;
  double t_lo_ = 0.0, t_hi_ = 0.0;
  StopReason reason_lo_ = StopReason::Horizon;
  StopReason reason_hi_ = StopReason::Horizon;
};

// Integrate one fiber forward and backward from t0 (real mode).
FlowResult integrate_flow(const FlowProblem& problem, std::span<const Scalar> x,
                          const ODESettings& settings = {});

// Integrate along a polyline of complex parameter values starting at
// problem.t0 (complex mode); the flow parameter is the arc parameter s
// with one unit per segment.
FlowResult integrate_along_path(const FlowProblem& problem,
                                std::span<const Scalar> x,
                                std::span<const Scalar> path,
                                const ODESettings& settings = {});

// Integrate around a closed polyline and report the per-coefficient change.
struct MonodromyReport {
  std::vector<CoefficientSystem::Label> labels;
  std::vector<Scalar> delta;  // end - start per tracked coefficient
  double max_abs = 0.0;
  FlowResult transport;
};

MonodromyReport monodromy(const FlowProblem& problem, std::span<const Scalar> x,
                          std::span<const Scalar> loop,
                          const ODESettings& settings = {});

// ---------------------------------------------------------------------------
// Consistency checking: interpolant derivative against the hierarchy RHS,
// g-part against the algebraic odd part, and the initial condition.
// ---------------------------------------------------------------------------

struct FlowEquationReport {
  double max_f_residual = 0.0;
  double max_g_residual = 0.0;
  double init_residual = 0.0;
  double max_residual() const;
};

std::vector<FlowSample> take_samples(const FlowResult& result,
                                     std::span<const double> ts);

FlowEquationReport verify_flow_equations(const FlowResult& result,
                                         std::span<const FlowSample> samples);

// The sampled morphism as symbolic MorphismData with constant
// coefficients, optionally extended by the auxiliary generator `tau_name`
// carrying the g-part.  Used to restart integrations from a sample.
MorphismData sample_as_morphism(const FlowResult& result,
                                const FlowSample& sample, bool with_tau,
                                const std::string& tau_name);

// ---------------------------------------------------------------------------
// Lie-series oracle: the order-K Taylor polynomial of the flow in t,
// computed by repeated application of the field on polynomial
// coefficients.  Restricted to the identity initial morphism at t0 = 0 and
// polynomial coefficient functions.
// ---------------------------------------------------------------------------

struct OracleSample {
  std::vector<GrassmannValue> f, g;  // per coordinate, over the odd gens
};

class LieSeries {
public:
  LieSeries(const SuperVectorField& X, const MorphismData& phi, int order);

  int order() const { return order_; }
  OracleSample eval(Scalar t, std::span<const Scalar> x) const;

private:
  int order_;
  int coordinates_;
  // f_terms_[k][j] = X0^k(w_j) / k!  ;  g_terms_[k][j] = X0^k(X1(w_j)) / k!
  std::vector<std::vector<PolyValue>> f_terms_, g_terms_;
};

LieSeries lie_series_oracle(const SuperVectorField& X, const MorphismData& phi,
                            int order);

// Max coefficient deviation (f and g) between the integrator result and
// the oracle over the given times.
double oracle_deviation(const FlowResult& result, const LieSeries& series,
                        std::span<const double> ts);

}  // namespace superflow
