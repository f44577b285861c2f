#pragma once

#include <stdexcept>
#include <string>

namespace sebp {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (bad JSON, wrong types, missing keys).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Structurally well-formed input that violates a model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during estimation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Current-magnitude Jacobian is undefined because the branch current is
/// (numerically) zero at the linearization point.
class CurrentSingularity : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Two exact (zero-variance) priors with different means were combined.
class ExactConflict : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// The gain matrix has no full column rank: the measurement set does not
/// determine the state.
class RankDeficient : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// All messages arriving at a variable carry zero precision.
class AllVacuous : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A state variable received no information in some outer iteration.
/// `variable_index` is the flat state index (angles first, then magnitudes).
class UnobservableVariable : public NumericalError {
public:
    UnobservableVariable(const std::string& what, int variable_index)
        : NumericalError(what), variable_index(variable_index) {}
    int variable_index;
};

/// A state variable is touched by no measurement at all.
class IsolatedVariable : public ValidationError {
public:
    IsolatedVariable(const std::string& what, int variable_index)
        : ValidationError(what), variable_index(variable_index) {}
    int variable_index;
};

} // namespace sebp
