#pragma once

#include <stdexcept>

namespace greenmg {

/// Grid size is not of the form 2^L + 1.
struct NonDyadicGrid : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Spatial dimension outside {1, 2}.
struct UnsupportedDimension : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Field level does not admit the requested transfer or lookup.
struct LevelMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Vector or matrix extents disagree with the operation's contract.
struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Requested sample count is not positive.
struct InvalidCount : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Input sits on a singularity of an analytic kernel.
struct SingularInput : std::domain_error {
    using std::domain_error::domain_error;
};

/// Loss target has (numerically) zero norm.
struct DegenerateTarget : std::domain_error {
    using std::domain_error::domain_error;
};

/// Covariance factorization failed even after jitter.
struct CovarianceNotPD : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reference solve did not reach the required residual.
struct SolveFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite value produced where finiteness is part of the contract.
struct NumericalBlowup : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Checkpoint architecture disagrees with the requested use.
struct ArchitectureMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File could not be read, written, or parsed.
struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace greenmg
