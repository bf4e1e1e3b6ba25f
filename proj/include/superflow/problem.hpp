#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "superflow/flow.hpp"
#include "superflow/supergeometry.hpp"

namespace superflow {

// ---------------------------------------------------------------------------
// Problem files: a JSON document declaring the chart, the field, the
// initial morphism, the initial parameter, and optional settings
// overrides.  Coefficients are expression text; complex scalars are
// two-element arrays [re, im].
// ---------------------------------------------------------------------------

struct ProblemFile {
  std::string name;  // optional free-form label echoed into reports
  SuperDomain target;
  SuperVectorField field;
  MorphismData initial;
  Scalar t0 = 0.0;
  ODESettings settings;
  std::vector<Scalar> loop;  // optional embedded polyline (path or loop)

  FlowProblem flow_problem() const { return {field, initial, t0}; }
};

// Throws ParseError on malformed documents and DimensionError on
// structurally invalid declarations.
ProblemFile load_problem_text(const std::string& text);
ProblemFile load_problem_file(const std::string& path);

// Round-trip serialization: loading the output runs identically.
std::string save_problem_text(const ProblemFile& p);

// ---------------------------------------------------------------------------
// Small front-end parsers shared by the CLI
// ---------------------------------------------------------------------------

// "1.5", "-2i", "1-0.45i" -> complex scalar.
Scalar parse_complex(const std::string& text);
std::string complex_to_string(Scalar z);

// "0,0.1,0.2" -> real sample times.
std::vector<double> parse_times(const std::string& text);

// "0,1-0.45i,2,1+0.45i,0" -> polyline vertices.
std::vector<Scalar> parse_polyline(const std::string& text);

// "x=-0.5:0.5:3,y=0:1:2": per even coordinate an inclusive linspace;
// every even coordinate of the domain must get exactly one axis.  Points
// enumerate in row-major order with the last axis fastest.
struct GridSpec {
  std::vector<std::string> names;            // in domain even order
  std::vector<std::vector<double>> axes;

  std::vector<std::vector<Scalar>> points() const;
};

GridSpec parse_grid(const std::string& text, const SuperDomain& domain);

// ---------------------------------------------------------------------------
// Seeded corpus fields: every (coordinate, monomial) slot of the field
// gets an independent polynomial of degree <= 2 in the even coordinates
// with coefficients drawn uniformly from [-1, 1].  The draw is fully
// deterministic in the seed (no distribution-library dependence).
// ---------------------------------------------------------------------------

SuperVectorField make_random_polynomial_field(const SuperDomain& domain,
                                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Coefficient tables: one CSV row per sampled coefficient,
//   x,t,coordinate,monomial,part,value
// with part in {f, g}, monomial named over the source generators, and
// complex values rendered as a+bi.
// ---------------------------------------------------------------------------

std::string coefficient_csv(const FlowResult& result,
                            std::span<const double> ts);

}  // namespace superflow
