#include "superflow/problem.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace superflow {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw ParseError(what, 0); }

Scalar scalar_from_json(const json& v, const char* what) {
  if (v.is_number()) return Scalar(v.get<double>());
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return Scalar(v[0].get<double>(), v[1].get<double>());
  bad(std::string(what) + " must be a number or a two-element array [re, im]");
}

std::vector<std::string> names_from_json(const json& v, const char* what) {
  std::vector<std::string> out;
  if (!v.is_array()) bad(std::string(what) + " must be an array of names");
  for (const auto& e : v) {
    if (!e.is_string()) bad(std::string(what) + " must contain only strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

SuperDomain domain_from_json(const json& j, const char* what) {
  if (!j.is_object()) bad(std::string(what) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "even" && key != "odd" && key != "mode" && key != "box")
      bad(std::string(what) + " has unknown key '" + key + "'");
  }
  std::vector<std::string> even, odd;
  if (j.contains("even")) even = names_from_json(j["even"], "chart even list");
  if (j.contains("odd")) odd = names_from_json(j["odd"], "chart odd list");
  EvalMode mode = EvalMode::Real;
  if (j.contains("mode")) {
    const std::string m = j["mode"].get<std::string>();
    if (m == "real")
      mode = EvalMode::Real;
    else if (m == "complex")
      mode = EvalMode::Complex;
    else
      bad("chart mode must be 'real' or 'complex'");
  }
  SuperDomain out(std::move(even), std::move(odd), mode);
  if (j.contains("box")) {
    if (!j["box"].is_object()) bad("chart box must be an object");
    for (const auto& [name, iv] : j["box"].items()) {
      if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() ||
          !iv[1].is_number())
        bad("box entry '" + name + "' must be [lo, hi]");
      out.set_box(name, iv[0].get<double>(), iv[1].get<double>());
    }
  }
  return out;
}

int odd_index_of(const SuperDomain& domain, const std::string& name) {
  for (int i = 0; i < domain.odd_dim(); ++i)
    if (domain.odd_names()[static_cast<std::size_t>(i)] == name) return i + 1;
  return 0;
}

void check_coefficient_vars(const ExprPtr& e, const SuperDomain& domain,
                            const std::string& where) {
  for (const std::string& v : variables_of(e)) {
    bool known = false;
    for (const auto& name : domain.even_names())
      if (name == v) known = true;
    if (!known)
      bad(where + " uses unknown variable '" + v + "'");
  }
}

SuperVectorField field_from_json(const json& j, const SuperDomain& target) {
  if (!j.is_object()) bad("'field' must map coordinate names to term lists");
  const int n = target.odd_dim();
  std::vector<SymbolicValue> comps(
      static_cast<std::size_t>(target.coordinates()), SymbolicValue(n));
  ExprPtr one = make_constant(1.0);
  for (const auto& [cname, terms] : j.items()) {
    int cj = -1;
    for (int k = 0; k < target.coordinates(); ++k)
      if (target.coordinate_name(k) == cname) cj = k;
    if (cj < 0) bad("field component for unknown coordinate '" + cname + "'");
    if (!terms.is_array())
      bad("field component '" + cname + "' must be an array of terms");
    SymbolicValue mv(n);
    for (const auto& term : terms) {
      if (!term.is_object() || !term.contains("coefficient"))
        bad("field term for '" + cname +
            "' must be {monomial: [...], coefficient: \"...\"}");
      for (const auto& [key, value] : term.items()) {
        (void)value;
        if (key != "monomial" && key != "coefficient")
          bad("field term for '" + cname + "' has unknown key '" + key + "'");
      }
      ExprPtr coeff = parse_expression(term["coefficient"].get<std::string>());
      check_coefficient_vars(coeff, target, "field coefficient for '" + cname + "'");
      SymbolicValue t = SymbolicValue::constant(n, coeff);
      if (term.contains("monomial")) {
        for (const std::string& g :
             names_from_json(term["monomial"], "field monomial")) {
          int idx = odd_index_of(target, g);
          if (idx == 0)
            bad("field monomial names unknown odd coordinate '" + g + "'");
          t = t * SymbolicValue::generator(n, idx, one);
        }
      }
      mv += t;
    }
    comps[static_cast<std::size_t>(cj)] = std::move(mv);
  }
  return SuperVectorField(target, std::move(comps));
}

MorphismData initial_from_json(const json& j, const SuperDomain& target) {
  SuperDomain source = target;
  std::vector<std::string> aux;
  const json* map = &j;
  json nested;
  if (j.contains("map") || j.contains("source") || j.contains("aux")) {
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (key != "map" && key != "source" && key != "aux")
        bad("'initial' has unknown key '" + key + "'");
    }
    if (j.contains("source")) source = domain_from_json(j["source"], "initial source");
    if (j.contains("aux")) aux = names_from_json(j["aux"], "initial aux");
    if (!j.contains("map")) bad("'initial' needs a 'map' object");
    nested = j["map"];
    map = &nested;
  }
  if (!map->is_object())
    bad("'initial' must map target coordinates to superfunction text");
  std::vector<SuperFunction> pulls;
  for (int k = 0; k < target.coordinates(); ++k) {
    const std::string& cname = target.coordinate_name(k);
    if (!map->contains(cname))
      bad("'initial' is missing coordinate '" + cname + "'");
    pulls.push_back(parse_superfunction((*map)[cname].get<std::string>(),
                                        source, aux));
  }
  for (const auto& [cname, value] : map->items()) {
    (void)value;
    bool known = false;
    for (int k = 0; k < target.coordinates(); ++k)
      if (target.coordinate_name(k) == cname) known = true;
    if (!known) bad("'initial' names unknown coordinate '" + cname + "'");
  }
  return MorphismData(std::move(source), target, std::move(aux),
                      std::move(pulls));
}

void settings_from_json(const json& j, ODESettings& st) {
  if (!j.is_object()) bad("'settings' must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "rtol")
      st.rtol = v.get<double>();
    else if (key == "atol")
      st.atol = v.get<double>();
    else if (key == "max_step")
      st.max_step = v.get<double>();
    else if (key == "max_steps")
      st.max_steps = v.get<long>();
    else if (key == "chart_margin")
      st.chart_margin = v.get<double>();
    else if (key == "horizon")
      st.horizon = v.get<double>();
    else if (key == "blowup")
      st.blowup = v.get<double>();
    else if (key == "underflow")
      st.underflow = v.get<double>();
    else
      bad("'settings' has unknown key '" + key + "'");
  }
  st.validate();
}

// Shortest decimal that still round-trips.
std::string round_trip_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace

ProblemFile load_problem_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  if (!j.is_object()) bad("problem file must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "name" && key != "target" && key != "field" &&
        key != "initial" && key != "t0" && key != "z0" && key != "settings" &&
        key != "loop" && key != "path")
      bad("problem file has unknown key '" + key + "'");
  }
  if (!j.contains("target")) bad("problem file needs a 'target' chart");
  if (!j.contains("field")) bad("problem file needs a 'field'");

  SuperDomain target = domain_from_json(j["target"], "'target'");
  SuperVectorField field = field_from_json(j["field"], target);
  MorphismData initial = j.contains("initial")
                             ? initial_from_json(j["initial"], target)
                             : MorphismData::identity(target);

  ProblemFile out{std::string(),    std::move(target), std::move(field),
                  std::move(initial), Scalar(0.0),     ODESettings{},
                  {}};
  if (j.contains("name")) out.name = j["name"].get<std::string>();
  if (j.contains("t0") && j.contains("z0"))
    bad("give either 't0' or 'z0', not both");
  if (j.contains("t0")) out.t0 = scalar_from_json(j["t0"], "'t0'");
  if (j.contains("z0")) out.t0 = scalar_from_json(j["z0"], "'z0'");
  if (j.contains("settings")) settings_from_json(j["settings"], out.settings);
  const char* lkey = j.contains("loop") ? "loop" : (j.contains("path") ? "path" : nullptr);
  if (lkey) {
    if (!j[lkey].is_array()) bad("polyline must be an array of scalars");
    for (const auto& v : j[lkey])
      out.loop.push_back(scalar_from_json(v, "polyline vertex"));
  }
  return out;
}

ProblemFile load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open problem file '" + path + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_problem_text(ss.str());
}

std::string save_problem_text(const ProblemFile& p) {
  json j;
  if (!p.name.empty()) j["name"] = p.name;

  auto domain_json = [](const SuperDomain& d) {
    json out;
    out["even"] = d.even_names();
    out["odd"] = d.odd_names();
    out["mode"] = d.mode() == EvalMode::Real ? "real" : "complex";
    if (!d.box().empty()) {
      json box;
      for (const auto& [name, iv] : d.box())
        box[name] = {iv.first, iv.second};
      out["box"] = box;
    }
    return out;
  };
  j["target"] = domain_json(p.target);

  json field = json::object();
  std::vector<std::string> gnames = p.target.odd_names();
  for (int k = 0; k < p.target.coordinates(); ++k) {
    const SymbolicValue& comp = p.field.component(k);
    if (comp.is_zero()) continue;
    json terms = json::array();
    for (const auto& [m, c] : comp.terms()) {
      json term;
      json mono = json::array();
      Mono rest = m;
      while (rest) {
        int bit = std::countr_zero(rest);
        rest &= rest - 1;
        mono.push_back(gnames[static_cast<std::size_t>(bit)]);
      }
      term["monomial"] = mono;
      term["coefficient"] = to_string(c);
      terms.push_back(term);
    }
    field[p.target.coordinate_name(k)] = terms;
  }
  j["field"] = field;

  json initial;
  initial["source"] = domain_json(p.initial.source());
  initial["aux"] = p.initial.aux();
  json map = json::object();
  for (int k = 0; k < p.target.coordinates(); ++k)
    map[p.target.coordinate_name(k)] = p.initial.pullback(k).to_string();
  initial["map"] = map;
  j["initial"] = initial;

  if (p.t0.imag() == 0.0 && p.target.mode() == EvalMode::Real)
    j["t0"] = p.t0.real();
  else
    j["z0"] = {p.t0.real(), p.t0.imag()};

  json st;
  st["rtol"] = p.settings.rtol;
  st["atol"] = p.settings.atol;
  st["max_step"] = p.settings.max_step;
  st["max_steps"] = p.settings.max_steps;
  st["chart_margin"] = p.settings.chart_margin;
  st["horizon"] = p.settings.horizon;
  st["blowup"] = p.settings.blowup;
  st["underflow"] = p.settings.underflow;
  j["settings"] = st;

  if (!p.loop.empty()) {
    json loop = json::array();
    for (const Scalar& z : p.loop) loop.push_back({z.real(), z.imag()});
    j["loop"] = loop;
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Front-end scalar/list parsing
// ---------------------------------------------------------------------------

namespace {

double parse_full_double(const std::string& text, const std::string& what) {
  if (text.empty()) throw ParseError(what + " is empty", 0);
  const char* begin = text.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + text.size())
    throw ParseError("malformed " + what + " '" + text + "'",
                     static_cast<std::size_t>(end - begin));
  return v;
}

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  std::size_t b = s.find_last_not_of(" \t");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t k = s.find(sep, start);
    if (k == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, k - start));
    start = k + 1;
  }
}

}  // namespace

Scalar parse_complex(const std::string& raw) {
  std::string s = trimmed(raw);
  if (s.empty()) throw ParseError("empty scalar", 0);
  if (s.back() != 'i' && s.back() != 'I')
    return Scalar(parse_full_double(s, "scalar"));
  s.pop_back();  // drop the i
  // Find the sign splitting real and imaginary parts (not leading, not an
  // exponent sign).
  std::size_t cut = std::string::npos;
  for (std::size_t k = 1; k < s.size(); ++k) {
    if ((s[k] == '+' || s[k] == '-') &&
        !(s[k - 1] == 'e' || s[k - 1] == 'E'))
      cut = k;
  }
  if (cut == std::string::npos) {
    if (s.empty() || s == "+" || s == "-")
      return Scalar(0.0, s == "-" ? -1.0 : 1.0);
    return Scalar(0.0, parse_full_double(s, "imaginary part"));
  }
  double re = parse_full_double(s.substr(0, cut), "real part");
  std::string im = s.substr(cut);
  if (im == "+") return Scalar(re, 1.0);
  if (im == "-") return Scalar(re, -1.0);
  return Scalar(re, parse_full_double(im, "imaginary part"));
}

std::string complex_to_string(Scalar z) {
  if (z.imag() == 0.0) return round_trip_double(z.real());
  std::string out;
  if (z.real() != 0.0) {
    out = round_trip_double(z.real());
    if (z.imag() >= 0.0) out += "+";
  }
  out += round_trip_double(z.imag());
  out += "i";
  return out;
}

std::vector<double> parse_times(const std::string& text) {
  std::vector<double> out;
  for (const std::string& part : split(text, ','))
    out.push_back(parse_full_double(trimmed(part), "time"));
  if (out.empty()) throw ParseError("empty time list", 0);
  return out;
}

std::vector<Scalar> parse_polyline(const std::string& text) {
  std::vector<Scalar> out;
  for (const std::string& part : split(text, ','))
    out.push_back(parse_complex(part));
  if (out.size() < 2) throw ParseError("polyline needs at least two vertices", 0);
  return out;
}

std::vector<std::vector<Scalar>> GridSpec::points() const {
  std::vector<std::vector<Scalar>> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  if (axes.empty()) return out;
  while (true) {
    std::vector<Scalar> pt;
    pt.reserve(axes.size());
    for (std::size_t k = 0; k < axes.size(); ++k)
      pt.emplace_back(axes[k][idx[k]]);
    out.push_back(std::move(pt));
    // odometer, last axis fastest
    std::size_t k = axes.size();
    while (k > 0) {
      --k;
      if (++idx[k] < axes[k].size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

GridSpec parse_grid(const std::string& text, const SuperDomain& domain) {
  std::map<std::string, std::vector<double>> axes;
  for (const std::string& part : split(text, ',')) {
    std::string spec = trimmed(part);
    std::size_t eq = spec.find('=');
    if (eq == std::string::npos)
      throw ParseError("grid entry '" + spec + "' needs name=lo:hi:count", 0);
    std::string name = trimmed(spec.substr(0, eq));
    std::vector<std::string> nums = split(spec.substr(eq + 1), ':');
    if (nums.size() != 3)
      throw ParseError("grid entry '" + spec + "' needs lo:hi:count", 0);
    double lo = parse_full_double(trimmed(nums[0]), "grid bound");
    double hi = parse_full_double(trimmed(nums[1]), "grid bound");
    double cnt = parse_full_double(trimmed(nums[2]), "grid count");
    int count = static_cast<int>(cnt);
    if (count < 1 || cnt != count)
      throw ParseError("grid count must be a positive integer", 0);
    bool known = false;
    for (const auto& v : domain.even_names())
      if (v == name) known = true;
    if (!known)
      throw ParseError("grid names unknown even coordinate '" + name + "'", 0);
    if (axes.count(name))
      throw ParseError("grid repeats coordinate '" + name + "'", 0);
    std::vector<double> axis;
    for (int i = 0; i < count; ++i)
      axis.push_back(count == 1 ? lo
                                : lo + (hi - lo) * i / static_cast<double>(count - 1));
    axes[name] = std::move(axis);
  }
  GridSpec out;
  for (const auto& name : domain.even_names()) {
    auto it = axes.find(name);
    if (it == axes.end())
      throw ParseError("grid is missing even coordinate '" + name + "'", 0);
    out.names.push_back(name);
    out.axes.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus fields
// ---------------------------------------------------------------------------

SuperVectorField make_random_polynomial_field(const SuperDomain& domain,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&rng]() {
    return -1.0 + 2.0 * std::ldexp(static_cast<double>(rng() >> 11), -53);
  };
  const auto& evens = domain.even_names();
  const int p = domain.even_dim();
  const int n = domain.odd_dim();
  auto random_poly = [&]() {
    std::vector<ExprPtr> terms;
    terms.push_back(make_constant(draw()));
    for (int i = 0; i < p; ++i)
      terms.push_back(make_constant(draw()) *
                      make_variable(evens[static_cast<std::size_t>(i)]));
    for (int i = 0; i < p; ++i)
      for (int k = i; k < p; ++k)
        terms.push_back(make_constant(draw()) *
                        make_variable(evens[static_cast<std::size_t>(i)]) *
                        make_variable(evens[static_cast<std::size_t>(k)]));
    return make_sum(std::move(terms));
  };
  std::vector<SymbolicValue> comps;
  comps.reserve(static_cast<std::size_t>(domain.coordinates()));
  for (int j = 0; j < domain.coordinates(); ++j) {
    SymbolicValue mv(n);
    for (Mono m = 0; m < (Mono(1) << n); ++m) mv.add_term(m, random_poly());
    comps.push_back(std::move(mv));
  }
  return SuperVectorField(domain, std::move(comps));
}

// ---------------------------------------------------------------------------
// Coefficient tables
// ---------------------------------------------------------------------------

std::string coefficient_csv(const FlowResult& result,
                            std::span<const double> ts) {
  std::ostringstream os;
  os << "x,t,coordinate,monomial,part,value\n";
  const SuperDomain& target = result.system().target();
  std::vector<std::string> gnames = result.problem().initial.source().odd_names();
  for (const auto& a : result.problem().initial.aux()) gnames.push_back(a);

  std::string xs;
  for (std::size_t i = 0; i < result.base_point().size(); ++i) {
    if (i) xs += ";";
    xs += complex_to_string(result.base_point()[i]);
  }

  for (double t : ts) {
    FlowSample s = result.is_path() ? result.sample_path(t) : result.sample(t);
    std::string tstr = complex_to_string(s.t);
    for (int j = 0; j < target.coordinates(); ++j) {
      for (const auto& [m, v] : s.f[static_cast<std::size_t>(j)].terms())
        os << xs << "," << tstr << "," << target.coordinate_name(j) << ","
           << mono_to_string(m, gnames) << ",f," << complex_to_string(v)
           << "\n";
      for (const auto& [m, v] : s.g[static_cast<std::size_t>(j)].terms())
        os << xs << "," << tstr << "," << target.coordinate_name(j) << ","
           << mono_to_string(m, gnames) << ",g," << complex_to_string(v)
           << "\n";
    }
  }
  return os.str();
}

}  // namespace superflow
