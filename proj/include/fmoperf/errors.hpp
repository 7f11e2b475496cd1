// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fmoperf {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid domain values or inconsistent inputs (bad shapes, negative counts, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed input text (CSV or JSON). Carries the 1-based line where parsing failed
/// when that is known; line() == 0 means "not attributable to a single line".
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, long line = 0)
        : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}

    long line() const noexcept { return line_; }

private:
    long line_ = 0;
};

/// Calibration input does not pin down the parameters (rank-deficient design).
class IdentifiabilityError : public Error {
public:
    using Error::Error;
};

/// Problem size exceeds a hard capacity guard (e.g. dense oracle dimension).
class CapacityError : public Error {
public:
    using Error::Error;
};

/// An iterative solve failed to reach its tolerance where a converged result is required.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Geometry that makes the interaction kernels blow up (coincident sites across fragments).
class SingularGeometryError : public Error {
public:
    using Error::Error;
};

/// A linear solve produced an unusable factorization or an inaccurate solution.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Workflow graph is not a DAG or references unknown modules.
class DagError : public Error {
public:
    using Error::Error;
};

/// Unknown preset name, or a preset override file that cannot be used.
class PresetError : public Error {
public:
    using Error::Error;
};

} // namespace fmoperf
