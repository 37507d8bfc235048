#pragma once

#include <stdexcept>
#include <string>

namespace fbac {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Grid / field errors
struct NonCommensurate : Error { using Error::Error; };
struct TooCoarse : Error { using Error::Error; };
struct OutOfDomain : Error { using Error::Error; };
struct TooNearBoundary : Error { using Error::Error; };
struct UnknownOracle : Error { using Error::Error; };

// Solver errors
struct BadConfig : Error { using Error::Error; };
struct BadDelta : Error { using Error::Error; };
struct NonMonotoneColumn : Error { using Error::Error; };
struct GraphCollision : Error { using Error::Error; };
struct Divergence : Error { using Error::Error; };
struct LinearSolveStall : Error { using Error::Error; };

// Level-set errors
struct NoCrossing : Error { using Error::Error; };
struct MultipleCrossings : Error { using Error::Error; };
struct DegenerateGradient : Error { using Error::Error; };
struct EmptyRegion : Error { using Error::Error; };

// Flow errors
struct LeftDomain : Error { using Error::Error; };
struct TooShort : Error { using Error::Error; };

// Verification errors
struct NotHarmonic : Error { using Error::Error; };

// Text format errors
struct ParseError : Error { using Error::Error; };

} // namespace fbac
