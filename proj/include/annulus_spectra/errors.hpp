#pragma once

#include <stdexcept>
#include <string>

namespace annulus_spectra {

/// Violated precondition on a public entry point (bad parameter, bad range).
class precondition_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Domain geometry that cannot be honoured (hole touching the outer
/// boundary, hole outside the outer region, ...).
class geometry_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Grid too coarse to resolve a feature.
class resolution_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A solver failed to converge; the message carries diagnostics.
class solver_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace annulus_spectra
