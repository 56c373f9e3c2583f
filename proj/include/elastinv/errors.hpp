#pragma once

#include <stdexcept>
#include <string>

namespace elastinv {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Out-of-range or mismatched arguments.
class ParameterError : public Error {
public:
    using Error::Error;
};

// A boundary split that leaves one of the two parts empty.
class PartitionError : public Error {
public:
    using Error::Error;
};

// Factorization failure, non-finite values, residual above tolerance.
class NumericError : public Error {
public:
    using Error::Error;
};

// Operation called on inputs that violate its documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace elastinv
