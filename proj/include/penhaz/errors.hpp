#pragma once

#include <stdexcept>
#include <string>

namespace penhaz {

/// Knot construction on a sample without spread.
class DegenerateDomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnsupportedOrderError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Covariates are collinear with each other or with the baseline hazard.
class SingularDesignError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalSingularityError : public std::runtime_error {
public:
    NumericalSingularityError(const std::string& what, double condition)
        : std::runtime_error(what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// A matrix that must be positive definite has a non-positive eigenvalue.
class IndefiniteMatrixError : public std::runtime_error {
public:
    IndefiniteMatrixError(const std::string& what, double eigenvalue)
        : std::runtime_error(what), eigenvalue_(eigenvalue) {}
    double eigenvalue() const noexcept { return eigenvalue_; }

private:
    double eigenvalue_;
};

class OutOfRangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class SelectionFailureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; line() is 1-based.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class NoCovariatesError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace penhaz
