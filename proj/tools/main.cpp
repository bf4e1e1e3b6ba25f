// Command-line front end: parse problem files, run integrations and
// supergroup-action checks, and emit CSV tables / JSON reports.
//
// Exit codes: 0 success (and checks pass), 2 parse or validation error,
// 3 numerical failure, 4 check failure.

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "superflow/action.hpp"
#include "superflow/flow.hpp"
#include "superflow/problem.hpp"

using nlohmann::json;
using namespace superflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheck = 4;

struct Options {
  std::string problem;
  std::string grid;
  std::string times;
  std::string path;
  std::string loop;
  std::string out;
  std::string format = "csv";
  std::string parts = "even,odd";
  int order = 12;
  double tol = 1e-8;
  std::uint64_t seed = 1729;
};

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw ParseError("cannot write output file '" + out_path + "'", 0);
  f << content;
}

json settings_json(const ODESettings& st) {
  return json{{"rtol", st.rtol},
              {"atol", st.atol},
              {"max_step", st.max_step},
              {"max_steps", st.max_steps},
              {"chart_margin", st.chart_margin},
              {"horizon", st.horizon},
              {"blowup", st.blowup},
              {"underflow", st.underflow}};
}

json point_json(std::span<const Scalar> x) {
  json out = json::array();
  for (const Scalar& v : x) out.push_back(complex_to_string(v));
  return out;
}

std::vector<Scalar> default_base_point(const SuperDomain& source) {
  std::vector<Scalar> x;
  for (const auto& name : source.even_names()) {
    auto it = source.box().find(name);
    if (it != source.box().end())
      x.emplace_back(0.5 * (it->second.first + it->second.second));
    else
      x.emplace_back(0.25);
  }
  return x;
}

std::vector<std::vector<Scalar>> base_points(const Options& o,
                                             const SuperDomain& source) {
  if (!o.grid.empty()) return parse_grid(o.grid, source).points();
  return {default_base_point(source)};
}

// Generator names of the tracked algebra (source odd coordinates followed
// by the auxiliaries of the initial morphism).
std::vector<std::string> live_names(const ProblemFile& pf) {
  std::vector<std::string> names = pf.initial.source().odd_names();
  for (const auto& a : pf.initial.aux()) names.push_back(a);
  return names;
}

long elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

// ---------------------------------------------------------------------------
// integrate
// ---------------------------------------------------------------------------

int run_integrate(const Options& o) {
  auto start = std::chrono::steady_clock::now();
  ProblemFile pf = load_problem_file(o.problem);
  if (o.format != "csv" && o.format != "json")
    throw ParseError("--format must be csv or json", 0);

  const bool complex_mode = pf.target.mode() == EvalMode::Complex;
  std::vector<Scalar> polyline;
  if (complex_mode) {
    if (!o.path.empty())
      polyline = parse_polyline(o.path);
    else if (!pf.loop.empty())
      polyline = pf.loop;
    else
      throw ParseError("complex-mode integration needs --path (or a path in "
                       "the problem file)", 0);
  } else if (!o.path.empty()) {
    throw ParseError("--path only applies to complex-mode problems", 0);
  }

  auto points = base_points(o, pf.initial.source());
  std::vector<double> ts;
  if (!o.times.empty()) ts = parse_times(o.times);

  struct Fiber {
    std::vector<Scalar> x;
    json info;
    std::string csv;
  };
  auto run_one = [&](const std::vector<Scalar>& x) {
    Fiber fb;
    fb.x = x;
    FlowResult res =
        complex_mode
            ? integrate_along_path(pf.flow_problem(), x, polyline, pf.settings)
            : integrate_flow(pf.flow_problem(), x, pf.settings);
    std::vector<double> samples = ts;
    if (samples.empty()) {
      if (complex_mode) {
        for (int k = 0; static_cast<double>(k) <= res.s_end() + 1e-12; ++k)
          samples.push_back(static_cast<double>(k));
      } else {
        const int count = 9;
        for (int k = 0; k < count; ++k)
          samples.push_back(res.t_min() +
                            (res.t_max() - res.t_min()) * k / (count - 1));
      }
    }
    fb.csv = coefficient_csv(res, samples);
    fb.info["x"] = point_json(x);
    if (complex_mode) {
      fb.info["s_end"] = res.s_end();
      fb.info["z_end"] = complex_to_string(res.z_at(res.s_end()));
      fb.info["stop"] = to_string(res.stop_reason_forward());
    } else {
      fb.info["t_min"] = res.t_min();
      fb.info["t_max"] = res.t_max();
      fb.info["stop_backward"] = to_string(res.stop_reason_backward());
      fb.info["stop_forward"] = to_string(res.stop_reason_forward());
    }
    return fb;
  };

  std::vector<std::future<Fiber>> futures;
  futures.reserve(points.size());
  for (const auto& pt : points)
    futures.push_back(std::async(std::launch::async, run_one, pt));

  std::string table;
  json fibers = json::array();
  for (auto& fut : futures) {
    Fiber fb = fut.get();
    if (table.empty())
      table = fb.csv;
    else
      table += fb.csv.substr(fb.csv.find('\n') + 1);  // drop repeated header
    fibers.push_back(std::move(fb.info));
  }

  if (o.format == "csv") {
    emit(o.out, table);
    return kExitOk;
  }
  json rep;
  rep["command"] = "integrate";
  rep["problem"] = o.problem;
  if (!pf.name.empty()) rep["name"] = pf.name;
  rep["settings"] = settings_json(pf.settings);
  rep["fibers"] = fibers;
  rep["table_csv"] = table;
  rep["timing_ms"] = elapsed_ms(start);
  emit(o.out, rep.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// check-action
// ---------------------------------------------------------------------------

// Default residual sample times: a short ladder on both sides of t0,
// scaled into the detected interval.
std::vector<double> residual_times(const FlowResult& res) {
  const double t0 = res.problem().t0.real();
  double side = std::min(res.t_max() - t0, t0 - res.t_min());
  double m = std::min(0.25, 0.9 * side);
  std::vector<double> ts{t0};
  for (double f : {0.25, 0.5, 1.0}) {
    ts.push_back(t0 + f * m);
    ts.push_back(t0 - f * m);
  }
  return ts;
}

std::vector<std::pair<double, double>> seeded_pairs(const FlowResult& res,
                                                    std::uint64_t seed,
                                                    int count,
                                                    double amplitude) {
  const double t0 = res.problem().t0.real();
  double side = std::min(res.t_max() - t0, t0 - res.t_min());
  double m = std::min(amplitude, 0.45 * side);
  std::mt19937_64 rng(seed);
  auto draw = [&rng, m]() {
    return m * (-1.0 + 2.0 * std::ldexp(static_cast<double>(rng() >> 11), -53));
  };
  std::vector<std::pair<double, double>> out;
  while (static_cast<int>(out.size()) < count) {
    double t1 = draw(), t2 = draw();
    if (std::abs(t1 + t2) > 0.9 * side) continue;
    out.emplace_back(t1, t2);
  }
  return out;
}

// Admissible parameter candidates for the action checks: the criterion's
// best-effort values projected onto the constraint a*b = 0.
std::vector<SupergroupParams> admissible_candidates(const CriterionReport& cr) {
  if (std::abs(cr.params.a * cr.params.b) <= 1e-12) return {cr.params};
  return {{cr.params.a, 0.0}, {0.0, cr.params.b}};
}

int run_check_action(const Options& o) {
  auto start = std::chrono::steady_clock::now();
  ProblemFile pf = load_problem_file(o.problem);
  if (pf.target.mode() != EvalMode::Real)
    throw ParseError("check-action runs on real-mode problems", 0);

  CriterionReport cr = find_action_params(pf.field);

  json rep;
  rep["command"] = "check-action";
  rep["problem"] = o.problem;
  if (!pf.name.empty()) rep["name"] = pf.name;
  rep["settings"] = settings_json(pf.settings);
  rep["tolerance"] = o.tol;
  rep["seed"] = o.seed;

  json crit;
  crit["status"] = cr.is_action() ? "action" : "no_action";
  crit["a"] = complex_to_string(cr.params.a);
  crit["b"] = complex_to_string(cr.params.b);
  if (!cr.note.empty()) crit["note"] = cr.note;
  json residues;
  for (int j = 0; j < pf.target.coordinates(); ++j) {
    residues["bracket_a"].push_back(cr.residue_a.component_string(j));
    residues["bracket_b"].push_back(cr.residue_b.component_string(j));
  }
  crit["residues"] = residues;
  rep["criterion"] = crit;

  auto points = base_points(o, pf.initial.source());
  std::vector<std::pair<double, double>> no_pairs;

  struct Fiber {
    json info;
    bool agrees = true;
  };
  auto run_one = [&](const std::vector<Scalar>& x) {
    Fiber fb;
    fb.info["x"] = point_json(x);
    FlowResult res = integrate_flow(pf.flow_problem(), x, pf.settings);
    fb.info["t_min"] = res.t_min();
    fb.info["t_max"] = res.t_max();
    std::vector<double> ts =
        o.times.empty() ? residual_times(res) : parse_times(o.times);
    auto pairs = seeded_pairs(res, o.seed, 10, 0.4);

    json checks = json::array();
    for (const SupergroupParams& cand : admissible_candidates(cr)) {
      json c;
      c["a"] = complex_to_string(cand.a);
      c["b"] = complex_to_string(cand.b);
      StrongFlowReport sf = strong_flow_residual(res, cand, ts);
      LocalActionReport la = verify_local_action(res, cand, pairs);
      c["identity_residual"] = sf.identity_residual;
      c["action_residual"] = sf.action_residual;
      c["local_action_difference"] = la.max_difference;
      const bool identity_ok = sf.identity_residual <= o.tol;
      const bool acts = sf.action_residual <= o.tol &&
                        la.max_difference <= o.tol;
      if (cr.is_action())
        fb.agrees = fb.agrees && identity_ok && acts;
      else
        fb.agrees = fb.agrees && identity_ok && !acts;
      checks.push_back(std::move(c));
    }
    fb.info["checks"] = checks;
    fb.info["agrees"] = fb.agrees;
    return fb;
  };

  std::vector<std::future<Fiber>> futures;
  for (const auto& pt : points)
    futures.push_back(std::async(std::launch::async, run_one, pt));

  bool all_agree = true;
  json fibers = json::array();
  for (auto& fut : futures) {
    Fiber fb = fut.get();
    all_agree = all_agree && fb.agrees;
    fibers.push_back(std::move(fb.info));
  }
  rep["fibers"] = fibers;
  rep["status"] = all_agree ? "ok" : "check-failed";
  rep["timing_ms"] = elapsed_ms(start);
  emit(o.out, rep.dump(2) + "\n");
  return all_agree ? kExitOk : kExitCheck;
}

// ---------------------------------------------------------------------------
// bracket
// ---------------------------------------------------------------------------

int run_bracket(const Options& o) {
  ProblemFile pf = load_problem_file(o.problem);
  auto pick = [&](const std::string& name) -> SuperVectorField {
    auto [even, odd] = pf.field.parity_split();
    if (name == "full") return pf.field;
    if (name == "even") return even;
    if (name == "odd") return odd;
    throw ParseError("--parts entries must be full, even, or odd", 0);
  };
  auto comma = o.parts.find(',');
  if (comma == std::string::npos)
    throw ParseError("--parts needs two comma-separated entries", 0);
  SuperVectorField lhs = pick(o.parts.substr(0, comma));
  SuperVectorField rhs = pick(o.parts.substr(comma + 1));
  SuperVectorField br = super_bracket(lhs, rhs);

  json rep;
  rep["command"] = "bracket";
  rep["problem"] = o.problem;
  rep["parts"] = o.parts;
  json comps = json::object();
  for (int j = 0; j < pf.target.coordinates(); ++j)
    comps[pf.target.coordinate_name(j)] = br.component_string(j);
  rep["bracket"] = comps;
  emit(o.out, rep.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// monodromy
// ---------------------------------------------------------------------------

int run_monodromy(const Options& o) {
  auto start = std::chrono::steady_clock::now();
  ProblemFile pf = load_problem_file(o.problem);
  std::vector<Scalar> loop;
  if (!o.loop.empty())
    loop = parse_polyline(o.loop);
  else if (!pf.loop.empty())
    loop = pf.loop;
  else
    throw ParseError("monodromy needs --loop (or a loop in the problem file)",
                     0);

  auto points = base_points(o, pf.initial.source());
  auto names = live_names(pf);

  json rep;
  rep["command"] = "monodromy";
  rep["problem"] = o.problem;
  if (!pf.name.empty()) rep["name"] = pf.name;
  rep["settings"] = settings_json(pf.settings);

  auto run_one = [&](const std::vector<Scalar>& x) {
    MonodromyReport mr = monodromy(pf.flow_problem(), x, loop, pf.settings);
    json fiber;
    fiber["x"] = point_json(x);
    fiber["max_abs"] = mr.max_abs;
    json deltas = json::array();
    for (std::size_t k = 0; k < mr.delta.size(); ++k) {
      if (std::abs(mr.delta[k]) == 0.0) continue;
      const auto& lab = mr.labels[k];
      json d;
      d["coordinate"] =
          mr.transport.system().target().coordinate_name(lab.coordinate);
      d["monomial"] = mono_to_string(lab.mono, names);
      d["delta"] = complex_to_string(mr.delta[k]);
      deltas.push_back(std::move(d));
    }
    fiber["delta"] = deltas;
    return fiber;
  };

  std::vector<std::future<json>> futures;
  for (const auto& pt : points)
    futures.push_back(std::async(std::launch::async, run_one, pt));
  json fibers = json::array();
  for (auto& fut : futures) fibers.push_back(fut.get());
  rep["fibers"] = fibers;
  rep["timing_ms"] = elapsed_ms(start);
  emit(o.out, rep.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

int run_oracle(const Options& o) {
  auto start = std::chrono::steady_clock::now();
  ProblemFile pf = load_problem_file(o.problem);
  if (pf.target.mode() != EvalMode::Real)
    throw ParseError("the series oracle runs on real-mode problems", 0);
  if (pf.t0 != Scalar(0.0))
    throw ParseError("the series oracle requires t0 = 0", 0);

  LieSeries series = [&]() {
    try {
      return lie_series_oracle(pf.field, pf.initial, o.order);
    } catch (const EvalError& e) {
      throw ParseError(std::string("oracle requires polynomial coefficients: ") +
                       e.what(), 0);
    } catch (const DimensionError& e) {
      throw ParseError(e.what(), 0);
    }
  }();

  std::vector<double> ts = o.times.empty()
                               ? std::vector<double>{-0.3, -0.2, -0.1,
                                                     0.1,  0.2,  0.3}
                               : parse_times(o.times);
  auto points = base_points(o, pf.initial.source());

  json rep;
  rep["command"] = "oracle";
  rep["problem"] = o.problem;
  rep["order"] = o.order;
  rep["times"] = ts;

  auto run_one = [&](const std::vector<Scalar>& x) {
    FlowResult res = integrate_flow(pf.flow_problem(), x, pf.settings);
    double dev = oracle_deviation(res, series, ts);
    json fiber;
    fiber["x"] = point_json(x);
    fiber["deviation"] = dev;
    return std::make_pair(fiber, dev);
  };

  std::vector<std::future<std::pair<json, double>>> futures;
  for (const auto& pt : points)
    futures.push_back(std::async(std::launch::async, run_one, pt));
  json fibers = json::array();
  double max_dev = 0.0;
  for (auto& fut : futures) {
    auto [fiber, dev] = fut.get();
    max_dev = std::max(max_dev, dev);
    fibers.push_back(std::move(fiber));
  }
  rep["fibers"] = fibers;
  rep["max_deviation"] = max_dev;
  rep["timing_ms"] = elapsed_ms(start);
  emit(o.out, rep.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

bool selftest_grassmann(std::ostream& os) {
  // Associativity and the sign rules, brute force over basis monomials.
  const int n = 4;
  const Mono top = Mono(1) << n;
  for (Mono a = 0; a < top; ++a)
    for (Mono b = 0; b < top; ++b) {
      GrassmannValue va = GrassmannValue::term(n, a, 1.0);
      GrassmannValue vb = GrassmannValue::term(n, b, 1.0);
      // graded commutativity
      GrassmannValue ab = va * vb;
      GrassmannValue ba = vb * va;
      double sign = (mono_parity(a) && mono_parity(b)) ? -1.0 : 1.0;
      if (max_abs_diff(ab, ba.scaled(sign)) != 0.0) {
        os << "commutativity broke at (" << a << ", " << b << ")\n";
        return false;
      }
      for (Mono c = 0; c < top; ++c) {
        GrassmannValue vc = GrassmannValue::term(n, c, 1.0);
        if (max_abs_diff((va * vb) * vc, va * (vb * vc)) != 0.0) {
          os << "associativity broke at (" << a << ", " << b << ", " << c
             << ")\n";
          return false;
        }
      }
    }
  return true;
}

bool selftest_expr(std::ostream& os) {
  ExprPtr e = parse_expression("exp(2*x) - (1 + x)^3 / sqrt(x)");
  VariableContext ctx;
  ctx.bind("x", 0.7);
  double want = std::exp(1.4) - std::pow(1.7, 3) / std::sqrt(0.7);
  Scalar got = evaluate(e, ctx, EvalMode::Real);
  if (std::abs(got - Scalar(want)) > 1e-12) {
    os << "expression evaluation off by " << std::abs(got - Scalar(want))
       << "\n";
    return false;
  }
  ExprPtr reparsed = parse_expression(to_string(e));
  if (std::abs(evaluate(reparsed, ctx, EvalMode::Real) - got) > 1e-12) {
    os << "print/parse round trip drifted\n";
    return false;
  }
  return true;
}

bool selftest_flow(std::ostream& os) {
  // d/dx + d/dxi + xi d/dx: closed form x + t + tau xi, xi + tau.
  SuperDomain dom({"x"}, {"xi"}, EvalMode::Real);
  std::vector<SymbolicValue> comps(2, SymbolicValue(1));
  comps[0] = SymbolicValue::constant(1, make_constant(1.0));
  comps[0] += SymbolicValue::term(1, Mono(1), make_constant(1.0));
  comps[1] = SymbolicValue::constant(1, make_constant(1.0));
  SuperVectorField X(dom, comps);
  FlowProblem prob{X, MorphismData::identity(dom), 0.0};
  std::vector<Scalar> x{0.3};
  FlowResult res = integrate_flow(prob, x);
  for (double t : {-0.35, 0.0, 0.2, 0.4}) {
    FlowSample s = res.sample(t);
    double err = std::abs(s.f[0].coefficient(0) - Scalar(0.3 + t));
    err = std::max(err, std::abs(s.g[0].coefficient(1) - Scalar(1.0)));
    err = std::max(err, std::abs(s.f[1].coefficient(1) - Scalar(1.0)));
    err = std::max(err, std::abs(s.g[1].coefficient(0) - Scalar(1.0)));
    if (err > 1e-9) {
      os << "flow regression drifted by " << err << " at t = " << t << "\n";
      return false;
    }
  }
  CriterionReport cr = find_action_params(X);
  if (!cr.is_action() || std::abs(cr.params.a - Scalar(1.0)) > 1e-9 ||
      std::abs(cr.params.b) > 1e-9) {
    os << "criterion did not find (a, b) = (1, 0)\n";
    return false;
  }
  return true;
}

bool selftest_group(std::ostream& os) {
  for (Scalar a : {0.0, 1.0}) {
    SupergroupParams p{a, 0.0};
    MorphismData lhs = compose(mu_pullback(p), group_mu_times_id(p));
    MorphismData rhs = compose(mu_pullback(p), group_id_times_mu(p));
    ZeroTester zt;
    for (int j = 0; j < 2; ++j) {
      SuperFunction diff = lhs.pullback(j) - rhs.pullback(j);
      for (const auto& [m, c] : diff.value().terms()) {
        (void)m;
        if (!zt.is_zero(c, lhs.source().even_names())) {
          os << "associativity failed for a = " << a.real() << "\n";
          return false;
        }
      }
    }
  }
  return true;
}

int run_selftest(const Options&) {
  struct Item {
    const char* name;
    bool (*fn)(std::ostream&);
  };
  const Item items[] = {{"grassmann-laws", selftest_grassmann},
                        {"expression-roundtrip", selftest_expr},
                        {"flow-regression", selftest_flow},
                        {"group-associativity", selftest_group}};
  bool ok = true;
  for (const Item& item : items) {
    std::ostringstream detail;
    bool pass = item.fn(detail);
    std::cout << (pass ? "[ok]   " : "[FAIL] ") << item.name << "\n";
    if (!pass) std::cout << detail.str();
    ok = ok && pass;
  }
  return ok ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flows of super vector fields and supergroup action checks"};
  app.require_subcommand(1);

  Options o;
  int rc = kExitOk;

  auto add_common = [&](CLI::App* sub, bool needs_problem) {
    if (needs_problem)
      sub->add_option("--problem", o.problem, "problem file (JSON)")
          ->required();
    sub->add_option("--grid", o.grid,
                    "base-point grid, e.g. x=-0.5:0.5:3,y=0:1:2");
    sub->add_option("--times", o.times, "sample times, e.g. 0,0.1,0.2");
    sub->add_option("--out", o.out, "write output here instead of stdout");
    sub->add_option("--tol", o.tol, "check tolerance");
    sub->add_option("--seed", o.seed, "seed for randomized samples");
  };

  CLI::App* integrate = app.add_subcommand("integrate", "run fibers, emit a coefficient table");
  add_common(integrate, true);
  integrate->add_option("--path", o.path, "complex polyline, e.g. 0,1+0.5i,2");
  integrate->add_option("--format", o.format,
                        "csv (coefficient table) or json (report)");
  integrate->callback([&] { rc = run_integrate(o); });

  CLI::App* check = app.add_subcommand("check-action", "bracket criterion + flow checks");
  add_common(check, true);
  check->callback([&] { rc = run_check_action(o); });

  CLI::App* bracket = app.add_subcommand("bracket", "super bracket of parity parts");
  add_common(bracket, true);
  bracket->add_option("--parts", o.parts,
                      "two of full/even/odd, e.g. even,odd");
  bracket->callback([&] { rc = run_bracket(o); });

  CLI::App* mono = app.add_subcommand("monodromy", "transport around a closed loop");
  add_common(mono, true);
  mono->add_option("--loop", o.loop, "closed polyline, e.g. 0,1-0.4i,2,1+0.4i,0");
  mono->callback([&] { rc = run_monodromy(o); });

  CLI::App* oracle = app.add_subcommand("oracle", "compare against the series oracle");
  add_common(oracle, true);
  oracle->add_option("--order", o.order, "series truncation order");
  oracle->callback([&] { rc = run_oracle(o); });

  CLI::App* selftest = app.add_subcommand("selftest", "quick built-in checks");
  selftest->callback([&] { rc = run_selftest(o); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitParse;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const FlowError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return rc;
}
