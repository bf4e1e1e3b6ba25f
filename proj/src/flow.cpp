#include "superflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

namespace superflow {

void ODESettings::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0))
    throw FlowError("tolerances must be positive");
  if (!(horizon > 0.0)) throw FlowError("horizon must be positive");
  if (!(blowup > 0.0)) throw FlowError("blow-up bound must be positive");
  if (max_steps <= 0) throw FlowError("max_steps must be positive");
  if (!(underflow > 0.0)) throw FlowError("underflow factor must be positive");
  if (chart_margin < 0.0 || max_step < 0.0)
    throw FlowError("margins and step caps must be non-negative");
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Horizon: return "completed";
    case StopReason::Blowup: return "blow-up";
    case StopReason::ChartExit: return "chart-exit";
    case StopReason::StepUnderflow: return "step-underflow";
    case StopReason::MaxSteps: return "max-steps";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// CoefficientSystem
// ---------------------------------------------------------------------------

CoefficientSystem::CoefficientSystem(SuperVectorField field, int live_gens)
    : field_(std::move(field)),
      x0_(SuperVectorField::zero(field_.domain())),
      x1_(SuperVectorField::zero(field_.domain())),
      live_gens_(live_gens) {
  if (live_gens_ < 0 || live_gens_ > kMaxGenerators)
    throw DimensionError("live generator count out of range");
  auto split = field_.parity_split();
  x0_ = std::move(split.first);
  x1_ = std::move(split.second);

  const int nc = target().coordinates();
  const Mono top = Mono(1) << live_gens_;
  index_.assign(nc, std::vector<int>(top, -1));
  for (int j = 0; j < nc; ++j) {
    const int want = target().coordinate_parity(j) & 1;
    for (Mono m = 0; m < top; ++m) {
      if (mono_parity(m) != want) continue;
      index_[j][m] = static_cast<int>(labels_.size());
      labels_.push_back({j, m});
    }
  }
}

int CoefficientSystem::index_of(int coordinate, Mono mono) const {
  if (coordinate < 0 || coordinate >= static_cast<int>(index_.size()))
    throw DimensionError("coordinate index out of range");
  if (mono >= index_[coordinate].size())
    throw DimensionError("monomial outside the live algebra");
  return index_[coordinate][mono];
}

std::vector<Scalar> CoefficientSystem::initial_state(
    const MorphismData& phi, std::span<const Scalar> x) const {
  if (!phi.target().same_as(target()))
    throw DimensionError("initial morphism targets the wrong chart");
  if (phi.source_gens() != live_gens_)
    throw DimensionError("initial morphism has the wrong generator count");
  if (static_cast<int>(x.size()) != phi.source().even_dim())
    throw DimensionError("base point has the wrong dimension");
  VariableContext ctx;
  for (int i = 0; i < phi.source().even_dim(); ++i)
    ctx.bind(phi.source().even_names()[i], x[i]);
  std::vector<Scalar> out(dim(), Scalar(0.0));
  for (int j = 0; j < target().coordinates(); ++j) {
    for (const auto& [m, c] : phi.pullback(j).value().terms()) {
      int idx = index_of(j, m);
      if (idx < 0)
        throw DimensionError("initial morphism violates parity filtering");
      out[idx] = evaluate(c, ctx, mode());
    }
  }
  return out;
}

std::vector<GrassmannValue> CoefficientSystem::assemble(
    std::span<const Scalar> f) const {
  if (static_cast<int>(f.size()) != dim())
    throw DimensionError("state vector has the wrong dimension");
  std::vector<GrassmannValue> out(target().coordinates(),
                                  GrassmannValue(live_gens_));
  for (std::size_t k = 0; k < labels_.size(); ++k)
    out[labels_[k].coordinate].add_term(labels_[k].mono, f[k]);
  return out;
}

GrassmannValue CoefficientSystem::pull_component(
    const std::vector<GrassmannValue>& pulls,
    const SymbolicValue& component) const {
  const int p = target().even_dim();
  VariableContext body;
  std::vector<GrassmannValue> nil;
  nil.reserve(p);
  for (int mu = 0; mu < p; ++mu) {
    body.bind(target().even_names()[mu], pulls[mu].coefficient(0));
    GrassmannValue n(live_gens_);
    for (const auto& [m, c] : pulls[mu].terms())
      if (m != 0) n.add_term(m, c);
    nil.push_back(std::move(n));
  }
  GrassmannValue acc(live_gens_);
  for (const auto& [J, aJ] : component.terms()) {
    auto it = tables_.find(aJ.get());
    if (it == tables_.end())
      it = tables_.emplace(aJ.get(), DerivTable(aJ, target().even_names()))
               .first;
    GrassmannValue val =
        taylor_pullback(it->second, body, nil, mode(), live_gens_ / 2,
                        live_gens_);
    Mono rest = J;
    while (rest && !val.is_zero()) {
      int s = std::countr_zero(rest);
      rest &= rest - 1;
      val = val * pulls[static_cast<std::size_t>(p + s)];
    }
    acc += val;
  }
  return acc;
}

void CoefficientSystem::rhs(std::span<const Scalar> f,
                            std::span<Scalar> dfdt) const {
  if (dfdt.size() != f.size() || static_cast<int>(f.size()) != dim())
    throw DimensionError("state vector has the wrong dimension");
  auto pulls = assemble(f);
  std::fill(dfdt.begin(), dfdt.end(), Scalar(0.0));
  for (int j = 0; j < target().coordinates(); ++j) {
    const SymbolicValue& comp = x0_.component(j);
    if (comp.is_zero()) continue;
    GrassmannValue acc = pull_component(pulls, comp);
    for (const auto& [m, v] : acc.terms()) {
      int idx = index_[j][m];
      if (idx < 0)
        throw DimensionError("hierarchy produced a parity-violating term");
      dfdt[idx] = v;
    }
  }
}

std::vector<GrassmannValue> CoefficientSystem::odd_part(
    std::span<const Scalar> f) const {
  auto pulls = assemble(f);
  std::vector<GrassmannValue> out(target().coordinates(),
                                  GrassmannValue(live_gens_));
  for (int j = 0; j < target().coordinates(); ++j) {
    const SymbolicValue& comp = x1_.component(j);
    if (comp.is_zero()) continue;
    out[j] = pull_component(pulls, comp);
  }
  return out;
}

std::vector<Scalar> CoefficientSystem::body(std::span<const Scalar> f) const {
  std::vector<Scalar> out(target().even_dim(), Scalar(0.0));
  for (int mu = 0; mu < target().even_dim(); ++mu) {
    int idx = index_[mu][0];
    out[mu] = f[static_cast<std::size_t>(idx)];
  }
  return out;
}

PointMorphism CoefficientSystem::point_morphism(
    std::span<const Scalar> f) const {
  auto pulls = assemble(f);
  PointMorphism pm;
  pm.target = &target();
  pm.even_pull.assign(pulls.begin(), pulls.begin() + target().even_dim());
  pm.odd_pull.assign(pulls.begin() + target().even_dim(), pulls.end());
  return pm;
}

std::vector<Scalar> hierarchy_rhs(const CoefficientSystem& sys,
                                  const FlowState& state) {
  std::vector<Scalar> out(state.f.size());
  sys.rhs(state.f, out);
  return out;
}

// ---------------------------------------------------------------------------
// DenseOutput
// ---------------------------------------------------------------------------

DenseOutput::DenseOutput(double t0, std::vector<Scalar> y0,
                         std::vector<Scalar> f0)
    : t0_(t0), y0_(std::move(y0)), f0_(std::move(f0)) {}

void DenseOutput::add_step(double t_start, double h, std::vector<Scalar> c1,
                           std::vector<Scalar> c2, std::vector<Scalar> c3,
                           std::vector<Scalar> c4, std::vector<Scalar> c5) {
  steps_.push_back(Step{t_start, h, std::move(c1), std::move(c2), std::move(c3),
                        std::move(c4), std::move(c5)});
}

void DenseOutput::finalize() {
  std::sort(steps_.begin(), steps_.end(),
            [](const Step& a, const Step& b) { return a.left() < b.left(); });
}

double DenseOutput::t_min() const {
  return steps_.empty() ? t0_ : std::min(t0_, steps_.front().left());
}

double DenseOutput::t_max() const {
  double out = t0_;
  for (const auto& s : steps_) out = std::max(out, s.right());
  return out;
}

bool DenseOutput::covers(double t) const {
  double pad = 1e-12 * std::max(1.0, std::max(std::abs(t_min()), std::abs(t_max())));
  return t >= t_min() - pad && t <= t_max() + pad;
}

const DenseOutput::Step* DenseOutput::find(double t) const {
  if (steps_.empty()) return nullptr;
  // Last step whose left endpoint is <= t (clamped into the covered range).
  auto it = std::upper_bound(
      steps_.begin(), steps_.end(), t,
      [](double value, const Step& s) { return value < s.left(); });
  if (it == steps_.begin()) return &steps_.front();
  return &*(it - 1);
}

std::vector<Scalar> DenseOutput::eval(double t) const {
  if (!covers(t)) throw FlowError("sample parameter outside the computed range");
  const Step* s = find(t);
  if (!s) return y0_;
  double theta = (t - s->t_start) / s->h;
  theta = std::clamp(theta, 0.0, 1.0);
  const double th1 = 1.0 - theta;
  std::vector<Scalar> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    out[i] = s->c1[i] +
             theta * (s->c2[i] +
                      th1 * (s->c3[i] + theta * (s->c4[i] + th1 * s->c5[i])));
  }
  return out;
}

std::vector<Scalar> DenseOutput::derivative(double t) const {
  if (!covers(t)) throw FlowError("sample parameter outside the computed range");
  const Step* s = find(t);
  if (!s) return f0_;
  double theta = (t - s->t_start) / s->h;
  theta = std::clamp(theta, 0.0, 1.0);
  const double th1 = 1.0 - theta;
  std::vector<Scalar> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    // u(theta) = c1 + theta*A, A = c2 + th1*B, B = c3 + theta*C,
    // C = c4 + th1*c5;  derivatives in theta:
    Scalar C = s->c4[i] + th1 * s->c5[i];
    Scalar B = s->c3[i] + theta * C;
    Scalar A = s->c2[i] + th1 * B;
    Scalar dC = -s->c5[i];
    Scalar dB = C + theta * dC;
    Scalar dA = -B + th1 * dB;
    out[i] = (A + theta * dA) / s->h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with dense output
// ---------------------------------------------------------------------------

namespace {

// Butcher tableau and the dense-output weights.
constexpr double c2 = 0.2, c3 = 0.3, c4 = 0.8, c5 = 8.0 / 9.0;
constexpr double a21 = 0.2;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                 a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                 a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0,
                 d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0,
                 d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0,
                 d7 = 69997945.0 / 29380423.0;

using RhsFn = std::function<void(double, std::span<const Scalar>, std::span<Scalar>)>;
using GuardFn = std::function<std::optional<StopReason>(std::span<const Scalar>)>;

bool finite(std::span<const Scalar> v) {
  for (const Scalar& c : v)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  return true;
}

double error_norm(std::span<const Scalar> err, std::span<const Scalar> y0,
                  std::span<const Scalar> y1, const ODESettings& st) {
  double acc = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    double sc = st.atol + st.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    double q = std::abs(err[i]) / sc;
    acc += q * q;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

double initial_step(const RhsFn& f, double t0, std::span<const Scalar> y,
                    std::span<const Scalar> f0, double dir, double span,
                    const ODESettings& st) {
  const std::size_t n = y.size();
  double d0 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sc = st.atol + st.rtol * std::abs(y[i]);
    double a = std::abs(y[i]) / sc;
    double b = std::abs(f0[i]) / sc;
    d0 += a * a;
    d1 += b * b;
  }
  d0 = std::sqrt(d0 / n);
  d1 = std::sqrt(d1 / n);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  std::vector<Scalar> y1(n), f1(n);
  for (std::size_t i = 0; i < n; ++i) y1[i] = y[i] + dir * h0 * f0[i];
  double d2 = 0.0;
  try {
    f(t0 + dir * h0, y1, f1);
    if (!finite(f1)) throw FlowError("probe failed");
    for (std::size_t i = 0; i < n; ++i) {
      double sc = st.atol + st.rtol * std::abs(y[i]);
      double q = std::abs(f1[i] - f0[i]) / sc;
      d2 += q * q;
    }
    d2 = std::sqrt(d2 / n) / h0;
  } catch (...) {
    return std::min(1e-6, span);
  }
  double der = std::max(d1, d2);
  double h1 = der > 1e-15 ? std::pow(0.01 / der, 0.2)
                          : std::max(1e-6, h0 * 1e-3);
  double h = std::min({100.0 * h0, h1, span});
  if (st.max_step > 0.0) h = std::min(h, st.max_step);
  return std::max(h, 1e-12);
}

struct DirectionOutcome {
  double t_end;
  StopReason reason;
};

// Integrate from t0 toward t_target (either direction), appending accepted
// steps to `dense`; y is advanced in place.  A guard violation discards the
// offending step and reports the last accepted parameter.
DirectionOutcome integrate_direction(const RhsFn& f, std::vector<Scalar>& y,
                                     double t0, double t_target,
                                     const ODESettings& st,
                                     const GuardFn& guard, DenseOutput& dense,
                                     std::vector<Scalar> k1 /* f(t0,y) */) {
  const std::size_t n = y.size();
  if (t_target == t0) return {t0, StopReason::Horizon};
  const double dir = t_target > t0 ? 1.0 : -1.0;

  std::vector<Scalar> k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n),
      y5(n), err(n);
  double t = t0;
  double h = dir * initial_step(f, t0, y, k1, dir, std::abs(t_target - t0), st);
  long steps = 0;
  bool rejected = false;
  // When the guard keeps rejecting trial steps, the accepted endpoint creeps
  // up to the crossing; once h underflows we stop for the guard's reason.
  std::optional<StopReason> pinned;

  while (true) {
    if (steps++ >= st.max_steps) return {t, StopReason::MaxSteps};
    if (std::abs(h) < st.underflow * std::max(1.0, std::abs(t)))
      return {t, pinned.value_or(StopReason::StepUnderflow)};

    bool bad = false;
    auto stage = [&](double c, std::span<Scalar> out,
                     std::initializer_list<std::pair<double, const std::vector<Scalar>*>>
                         terms) {
      for (std::size_t i = 0; i < n; ++i) {
        Scalar acc = y[i];
        for (const auto& [a, k] : terms) acc += h * a * (*k)[i];
        ytmp[i] = acc;
      }
      try {
        f(t + c * h, ytmp, out);
      } catch (const EvalError&) {
        bad = true;
        return;
      }
      if (!finite(out)) bad = true;
    };

    stage(c2, k2, {{a21, &k1}});
    if (!bad) stage(c3, k3, {{a31, &k1}, {a32, &k2}});
    if (!bad) stage(c4, k4, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
    if (!bad)
      stage(c5, k5, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    if (!bad)
      stage(1.0, k6,
            {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    if (!bad) {
      for (std::size_t i = 0; i < n; ++i)
        y5[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] +
                            a75 * k5[i] + a76 * k6[i]);
      try {
        f(t + h, y5, k7);
      } catch (const EvalError&) {
        bad = true;
      }
      if (!bad && !finite(k7)) bad = true;
    }

    double errn = 0.0;
    if (!bad) {
      for (std::size_t i = 0; i < n; ++i)
        err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                      e6 * k6[i] + e7 * k7[i]);
      errn = error_norm(err, y, y5, st);
      if (!std::isfinite(errn)) bad = true;
    }

    if (bad) {
      h *= 0.3;
      rejected = true;
      continue;
    }

    if (errn > 1.0) {
      double fac = std::max(0.2, 0.9 * std::pow(errn, -0.2));
      h *= fac;
      rejected = true;
      continue;
    }

    // Accepted by error control: the guard gets a veto before recording.
    // A veto rejects the step so the endpoint localizes the crossing.
    if (auto stop = guard(y5)) {
      pinned = *stop;
      h *= 0.5;
      rejected = true;
      continue;
    }
    pinned.reset();

    std::vector<Scalar> rc1(y.begin(), y.end());
    std::vector<Scalar> rc2(n), rc3(n), rc4(n), rc5(n);
    for (std::size_t i = 0; i < n; ++i) {
      Scalar ydiff = y5[i] - y[i];
      Scalar bspl = h * k1[i] - ydiff;
      rc2[i] = ydiff;
      rc3[i] = bspl;
      rc4[i] = ydiff - h * k7[i] - bspl;
      rc5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                    d6 * k6[i] + d7 * k7[i]);
    }
    dense.add_step(t, h, std::move(rc1), std::move(rc2), std::move(rc3),
                   std::move(rc4), std::move(rc5));

    t += h;
    y = y5;
    k1 = k7;  // first-same-as-last

    if (dir * (t_target - t) <= 1e-14 * std::max(1.0, std::abs(t_target)))
      return {t_target, StopReason::Horizon};

    double fac = std::clamp(0.9 * std::pow(std::max(errn, 1e-10), -0.2), 0.2,
                            rejected ? 1.0 : 10.0);
    rejected = false;
    h *= fac;
    if (st.max_step > 0.0 && std::abs(h) > st.max_step)
      h = dir * st.max_step;
    if (dir * (t + h - t_target) > 0.0) h = t_target - t;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Fiber integration
// ---------------------------------------------------------------------------

static GuardFn make_guard(const CoefficientSystem& sys,
                          const ODESettings& st) {
  return [&sys, st](std::span<const Scalar> y) -> std::optional<StopReason> {
    for (const Scalar& c : y)
      if (std::abs(c) > st.blowup) return StopReason::Blowup;
    auto body = sys.body(y);
    if (!sys.target().contains(body, st.chart_margin))
      return StopReason::ChartExit;
    return std::nullopt;
  };
}

FlowResult integrate_flow(const FlowProblem& problem, std::span<const Scalar> x,
                          const ODESettings& settings) {
  settings.validate();
  if (problem.mode() != EvalMode::Real)
    throw FlowError(
        "direct time integration runs in real mode; use a path in complex "
        "mode");
  if (problem.t0.imag() != 0.0)
    throw FlowError("real-mode initial parameter must be real");
  const double t0 = problem.t0.real();

  FlowResult out(problem, settings, std::vector<Scalar>(x.begin(), x.end()),
                 std::make_shared<CoefficientSystem>(
                     problem.field, problem.initial.source_gens()));
  const CoefficientSystem& sys = *out.sys_;

  std::vector<Scalar> y0 = sys.initial_state(problem.initial, x);
  if (!sys.target().contains(sys.body(y0), settings.chart_margin))
    throw FlowError("initial body point lies outside the chart box");

  RhsFn f = [&sys](double, std::span<const Scalar> y, std::span<Scalar> dy) {
    sys.rhs(y, dy);
  };
  std::vector<Scalar> f0(y0.size());
  f(t0, y0, f0);
  if (!finite(f0))
    throw FlowError("non-finite right-hand side at the initial point");

  out.dense_ = DenseOutput(t0, y0, f0);
  GuardFn guard = make_guard(sys, settings);

  std::vector<Scalar> y = y0;
  auto fwd = integrate_direction(f, y, t0, t0 + settings.horizon, settings,
                                 guard, out.dense_, f0);
  y = y0;
  auto bwd = integrate_direction(f, y, t0, t0 - settings.horizon, settings,
                                 guard, out.dense_, f0);
  out.dense_.finalize();
  out.t_hi_ = fwd.t_end;
  out.reason_hi_ = fwd.reason;
  out.t_lo_ = bwd.t_end;
  out.reason_lo_ = bwd.reason;
  return out;
}

FlowResult integrate_along_path(const FlowProblem& problem,
                                std::span<const Scalar> x,
                                std::span<const Scalar> path,
                                const ODESettings& settings) {
  settings.validate();
  if (problem.mode() != EvalMode::Complex)
    throw FlowError("path integration requires a complex chart");
  if (path.size() < 2) throw FlowError("path needs at least two vertices");
  if (std::abs(path[0] - problem.t0) > 1e-12)
    throw FlowError("path must start at the initial parameter z0");

  FlowResult out(problem, settings, std::vector<Scalar>(x.begin(), x.end()),
                 std::make_shared<CoefficientSystem>(
                     problem.field, problem.initial.source_gens()));
  out.path_.assign(path.begin(), path.end());
  out.path_mode_ = true;
  const CoefficientSystem& sys = *out.sys_;

  std::vector<Scalar> y = sys.initial_state(problem.initial, x);
  if (!sys.target().contains(sys.body(y), settings.chart_margin))
    throw FlowError("initial body point lies outside the chart box");
  GuardFn guard = make_guard(sys, settings);

  const int nseg = static_cast<int>(path.size()) - 1;
  std::vector<Scalar> dz(nseg);
  for (int i = 0; i < nseg; ++i) dz[i] = path[i + 1] - path[i];

  // d/ds with one unit of s per segment: dz_i * (hierarchy RHS).
  auto seg_rhs = [&sys](Scalar dzi) {
    return [&sys, dzi](double, std::span<const Scalar> yy,
                       std::span<Scalar> dy) {
      sys.rhs(yy, dy);
      for (auto& v : dy) v *= dzi;
    };
  };

  std::vector<Scalar> f0(y.size());
  seg_rhs(dz[0])(0.0, y, f0);
  if (!finite(f0))
    throw FlowError("non-finite right-hand side at the initial point");
  out.dense_ = DenseOutput(0.0, y, f0);

  double s = 0.0;
  StopReason reason = StopReason::Horizon;
  for (int i = 0; i < nseg; ++i) {
    RhsFn f = seg_rhs(dz[i]);
    std::vector<Scalar> k1(y.size());
    f(static_cast<double>(i), y, k1);
    if (!finite(k1)) {
      reason = StopReason::Blowup;
      break;
    }
    auto res = integrate_direction(f, y, static_cast<double>(i),
                                   static_cast<double>(i + 1), settings, guard,
                                   out.dense_, std::move(k1));
    s = res.t_end;
    reason = res.reason;
    if (reason != StopReason::Horizon) break;
  }
  out.dense_.finalize();
  out.s_end_ = s;
  out.t_lo_ = 0.0;
  out.t_hi_ = s;
  out.reason_lo_ = StopReason::Horizon;
  out.reason_hi_ = reason;
  return out;
}

MonodromyReport monodromy(const FlowProblem& problem, std::span<const Scalar> x,
                          std::span<const Scalar> loop,
                          const ODESettings& settings) {
  if (loop.size() < 3 || std::abs(loop.front() - loop.back()) > 1e-12)
    throw FlowError("monodromy requires a closed polyline");
  FlowResult transport = integrate_along_path(problem, x, loop, settings);
  const double full = static_cast<double>(loop.size() - 1);
  if (transport.s_end() < full)
    throw FlowError(std::string("transport stopped before closing the loop (") +
                    to_string(transport.stop_reason_forward()) + ")");
  std::vector<Scalar> start = transport.dense().eval(0.0);
  std::vector<Scalar> end = transport.dense().eval(full);
  MonodromyReport rep{transport.system().labels(), {}, 0.0,
                      std::move(transport)};
  rep.delta.resize(start.size());
  for (std::size_t i = 0; i < start.size(); ++i) {
    rep.delta[i] = end[i] - start[i];
    rep.max_abs = std::max(rep.max_abs, std::abs(rep.delta[i]));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// FlowResult queries
// ---------------------------------------------------------------------------

bool FlowResult::contains_time(double t) const {
  if (path_mode_) return t >= 0.0 && t <= s_end_;
  double pad = 1e-12 * std::max(1.0, std::max(std::abs(t_lo_), std::abs(t_hi_)));
  return t >= t_lo_ - pad && t <= t_hi_ + pad;
}

std::vector<Scalar> FlowResult::state_at(double t) const {
  return dense_.eval(t);
}

std::vector<Scalar> FlowResult::rhs_at(double t) const {
  std::vector<Scalar> y = dense_.eval(t);
  std::vector<Scalar> dy(y.size());
  sys_->rhs(y, dy);
  return dy;
}

FlowSample FlowResult::make_sample(Scalar t_label, double s_query) const {
  FlowSample out;
  out.t = t_label;
  out.x = x_;
  out.state = dense_.eval(s_query);
  out.f = sys_->assemble(out.state);
  out.g = sys_->odd_part(out.state);
  return out;
}

FlowSample FlowResult::sample(double t) const {
  if (path_mode_)
    throw FlowError("use sample_path for path-mode results");
  if (!contains_time(t))
    throw FlowError("sample time outside the computed interval");
  return make_sample(Scalar(t), t);
}

Scalar FlowResult::z_at(double s) const {
  if (!path_mode_) throw FlowError("not a path-mode result");
  const int nseg = static_cast<int>(path_.size()) - 1;
  int i = std::clamp(static_cast<int>(std::floor(s)), 0, nseg - 1);
  double frac = s - i;
  return path_[i] + frac * (path_[i + 1] - path_[i]);
}

Scalar FlowResult::dz_at(double s) const {
  if (!path_mode_) throw FlowError("not a path-mode result");
  const int nseg = static_cast<int>(path_.size()) - 1;
  int i = std::clamp(static_cast<int>(std::floor(s)), 0, nseg - 1);
  return path_[i + 1] - path_[i];
}

FlowSample FlowResult::sample_path(double s) const {
  if (!path_mode_) throw FlowError("not a path-mode result");
  if (s < -1e-12 || s > s_end_ + 1e-12)
    throw FlowError("sample parameter outside the integrated path");
  return make_sample(z_at(std::clamp(s, 0.0, s_end_)), s);
}

GrassmannValue FlowSample::full(int j) const {
  const int live = f[static_cast<std::size_t>(j)].generators();
  GrassmannValue out = f[static_cast<std::size_t>(j)].adjoin_generators(1);
  GrassmannValue tau = GrassmannValue::generator(live + 1, live + 1, 1.0);
  out += tau * g[static_cast<std::size_t>(j)].adjoin_generators(1);
  return out;
}

// ---------------------------------------------------------------------------
// Consistency checks and sample morphisms
// ---------------------------------------------------------------------------

double FlowEquationReport::max_residual() const {
  return std::max({max_f_residual, max_g_residual, init_residual});
}

std::vector<FlowSample> take_samples(const FlowResult& result,
                                     std::span<const double> ts) {
  std::vector<FlowSample> out;
  out.reserve(ts.size());
  for (double t : ts)
    out.push_back(result.is_path() ? result.sample_path(t) : result.sample(t));
  return out;
}

FlowEquationReport verify_flow_equations(const FlowResult& result,
                                         std::span<const FlowSample> samples) {
  if (result.is_path())
    throw FlowError("flow-equation check applies to real-mode results");
  const CoefficientSystem& sys = result.system();
  FlowEquationReport rep;

  const double t0 = result.problem().t0.real();
  std::vector<Scalar> at0 = result.state_at(t0);
  std::vector<Scalar> want0 =
      sys.initial_state(result.problem().initial, result.base_point());
  for (std::size_t i = 0; i < at0.size(); ++i)
    rep.init_residual = std::max(rep.init_residual, std::abs(at0[i] - want0[i]));

  std::vector<Scalar> dy(static_cast<std::size_t>(sys.dim()));
  for (const FlowSample& s : samples) {
    double t = s.t.real();
    std::vector<Scalar> deriv = result.dense().derivative(t);
    sys.rhs(s.state, dy);
    for (std::size_t i = 0; i < dy.size(); ++i)
      rep.max_f_residual =
          std::max(rep.max_f_residual, std::abs(deriv[i] - dy[i]));
    auto g = sys.odd_part(s.state);
    for (std::size_t j = 0; j < g.size(); ++j)
      rep.max_g_residual = std::max(
          rep.max_g_residual, max_abs_diff(g[j], s.g[j]));
  }
  return rep;
}

MorphismData sample_as_morphism(const FlowResult& result,
                                const FlowSample& sample, bool with_tau,
                                const std::string& tau_name) {
  const SuperDomain& source = result.problem().initial.source();
  const SuperDomain& target = result.problem().initial.target();
  std::vector<std::string> aux = result.problem().initial.aux();
  if (with_tau) aux.push_back(tau_name);
  std::vector<SuperFunction> pulls;
  pulls.reserve(static_cast<std::size_t>(target.coordinates()));
  for (int j = 0; j < target.coordinates(); ++j) {
    GrassmannValue v =
        with_tau ? sample.full(j) : sample.f[static_cast<std::size_t>(j)];
    SymbolicValue sv =
        v.map_coefficients([](const Scalar& c) { return make_constant(c); });
    pulls.emplace_back(source, aux, std::move(sv));
  }
  return MorphismData(source, target, std::move(aux), std::move(pulls));
}

// ---------------------------------------------------------------------------
// Lie-series oracle
// ---------------------------------------------------------------------------

LieSeries::LieSeries(const SuperVectorField& X, const MorphismData& phi,
                     int order)
    : order_(order), coordinates_(X.domain().coordinates()) {
  if (order < 0) throw DimensionError("oracle order must be non-negative");
  if (!phi.is_identity())
    throw DimensionError("the series oracle requires the identity initial morphism");
  PolyField F = PolyField::from_field(X);
  auto [F0, F1] = F.parity_split();

  const int n = X.domain().odd_dim();
  const int p = X.domain().even_dim();
  std::vector<PolyValue> a0;
  a0.reserve(static_cast<std::size_t>(coordinates_));
  for (int j = 0; j < coordinates_; ++j) {
    if (j < p)
      a0.push_back(PolyValue::constant(n, Poly::variable(j)));
    else
      a0.push_back(PolyValue::generator(n, j - p + 1, Poly::constant(1.0)));
  }
  std::vector<PolyValue> b0;
  b0.reserve(static_cast<std::size_t>(coordinates_));
  for (int j = 0; j < coordinates_; ++j)
    b0.push_back(apply_poly_field(F1, a0[static_cast<std::size_t>(j)]));

  f_terms_.push_back(std::move(a0));
  g_terms_.push_back(std::move(b0));
  for (int k = 1; k <= order; ++k) {
    const Poly inv = Poly::constant(1.0 / static_cast<double>(k));
    std::vector<PolyValue> ak, bk;
    ak.reserve(static_cast<std::size_t>(coordinates_));
    bk.reserve(static_cast<std::size_t>(coordinates_));
    for (int j = 0; j < coordinates_; ++j) {
      ak.push_back(
          apply_poly_field(F0, f_terms_.back()[static_cast<std::size_t>(j)])
              .scaled(inv));
      bk.push_back(
          apply_poly_field(F0, g_terms_.back()[static_cast<std::size_t>(j)])
              .scaled(inv));
    }
    f_terms_.push_back(std::move(ak));
    g_terms_.push_back(std::move(bk));
  }
}

OracleSample LieSeries::eval(Scalar t, std::span<const Scalar> x) const {
  OracleSample out;
  const int n = f_terms_.front().front().generators();
  out.f.assign(static_cast<std::size_t>(coordinates_), GrassmannValue(n));
  out.g.assign(static_cast<std::size_t>(coordinates_), GrassmannValue(n));
  for (int j = 0; j < coordinates_; ++j) {
    Scalar tk = 1.0;
    for (std::size_t k = 0; k < f_terms_.size(); ++k) {
      out.f[static_cast<std::size_t>(j)] +=
          eval_poly_value(f_terms_[k][static_cast<std::size_t>(j)], x)
              .scaled(tk);
      out.g[static_cast<std::size_t>(j)] +=
          eval_poly_value(g_terms_[k][static_cast<std::size_t>(j)], x)
              .scaled(tk);
      tk *= t;
    }
  }
  return out;
}

LieSeries lie_series_oracle(const SuperVectorField& X, const MorphismData& phi,
                            int order) {
  return LieSeries(X, phi, order);
}

double oracle_deviation(const FlowResult& result, const LieSeries& series,
                        std::span<const double> ts) {
  double dev = 0.0;
  for (double t : ts) {
    FlowSample s = result.sample(t);
    OracleSample o = series.eval(Scalar(t), result.base_point());
    for (std::size_t j = 0; j < s.f.size(); ++j) {
      dev = std::max(dev, max_abs_diff(s.f[j], o.f[j]));
      dev = std::max(dev, max_abs_diff(s.g[j], o.g[j]));
    }
  }
  return dev;
}

}  // namespace superflow
