#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace passfpca {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidGridError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class InsufficientSampleError : public Error {
public:
    using Error::Error;
};

/// All curves (or all pairs, or all projections) collapse to a point.
class DegenerateSampleError : public Error {
public:
    using Error::Error;
};

class SymmetryError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class UnreachableThresholdError : public Error {
public:
    using Error::Error;
};

class BasisError : public Error {
public:
    using Error::Error;
};

/// Iterative routine ran out of iterations; the last iterate is kept.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
        : Error(what), last_iterate_(std::move(last_iterate)) {}

    const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

private:
    Eigen::VectorXd last_iterate_;
};

/// Malformed text input. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that names something invalid (unknown key, bad enum).
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace passfpca
