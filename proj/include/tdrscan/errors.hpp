#pragma once

#include <stdexcept>
#include <string>

namespace tdr {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (topology files, CSV, numeric literals).
/// Carries a 1-based line number when one is known, 0 otherwise.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_ = 0;
};

/// Structurally valid input that violates a semantic constraint
/// (stub beyond bus end, duplicate label, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Simulation setup or stability failure.
class SimError : public Error {
public:
    using Error::Error;
};

/// Signal-analysis precondition failure (mismatched windows, too few
/// segments, zero-variance input).
class AnalysisError : public Error {
public:
    using Error::Error;
};

} // namespace tdr
