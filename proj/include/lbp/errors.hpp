#pragma once

#include <stdexcept>

namespace lbp {

// Thrown by build_coupling when the tail ordering or the death-rate ordering
// fails: the ASG construction is undefined for such law pairs.
struct OrderingViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Total CTMC rate exceeded the configured bound (pathological parameters).
struct RateOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Diffusion coefficient evaluated below -1e-12: parameters violate
// the nonnegativity invariant of the noise term.
struct NegativeVariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dual-chain rates would be negative for the given parameters.
struct InvalidDualParams : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Label-category geometry N >= i + 2j violated in a lineage transition.
struct GeometryViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested more lineages than individuals alive at the sampling time.
struct SampleTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptySample : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed configuration (model / experiment files, CLI arguments).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lbp
