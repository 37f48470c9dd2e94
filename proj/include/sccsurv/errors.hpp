#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace sccsurv {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-domain input (bad CSV, bad option values).
class InputError : public Error {
public:
    using Error::Error;
};

class NegativeTimeError : public InputError {
public:
    using InputError::InputError;
};

class EmptyArmError : public InputError {
public:
    using InputError::InputError;
};

class InvalidWidthError : public InputError {
public:
    using InputError::InputError;
};

class GridMismatchError : public Error {
public:
    using Error::Error;
};

class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

class ZeroSurvivalError : public Error {
public:
    using Error::Error;
};

class CrossingOutOfRangeError : public Error {
public:
    using Error::Error;
};

class DegenerateWindowError : public Error {
public:
    using Error::Error;
};

// The starting point is constructed to be feasible, so this signals a bug.
class InfeasibleStartError : public Error {
public:
    using Error::Error;
};

// No log-jump vector with positive likelihood satisfies the crossing system.
// Jumps where an arm has nobody at risk are fixed at 0, so a candidate can
// require an arm with events to stay level.
class InfeasibleConstraintsError : public Error {
public:
    using Error::Error;
};

class SolverFailureError : public Error {
public:
    explicit SolverFailureError(const std::string& what) : Error(what) {}
    SolverFailureError(const std::string& what, double theta, int gamma)
        : Error(what + " (theta=" + std::to_string(theta) + ", gamma=" + std::to_string(gamma) + ")"),
          theta_(theta),
          gamma_(gamma) {}

    std::optional<double> theta() const { return theta_; }
    std::optional<int> gamma() const { return gamma_; }

private:
    std::optional<double> theta_;
    std::optional<int> gamma_;
};

}  // namespace sccsurv
