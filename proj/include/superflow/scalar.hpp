#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace superflow {

// All numeric values flow through std::complex<double>.  Real-mode
// computations keep the imaginary part exactly zero, so a single state
// layout serves both the real and the holomorphic pipelines.
using Scalar = std::complex<double>;

enum class EvalMode { Real, Complex };

inline const char* to_string(EvalMode m) {
  return m == EvalMode::Real ? "real" : "complex";
}

// ---------------------------------------------------------------------------
// Error taxonomy.  Every failure the library reports deliberately is one of
// these; anything else escaping is a bug.
// ---------------------------------------------------------------------------

// Malformed textual input (expressions, superfunctions, problem files).
// `position` is the byte offset into the offending source string.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

// Runtime evaluation failures: unbound variables, division by zero,
// real-mode domain violations (log of a non-positive value, ...).
class EvalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Structural mismatches: wrong generator counts, incompatible domains,
// parity violations, out-of-range indices.
class DimensionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numerical integration failures that are not mere early stopping:
// a non-finite right-hand side at the initial point, an initial body
// point outside the chart box, an empty integration request.
class FlowError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace superflow
