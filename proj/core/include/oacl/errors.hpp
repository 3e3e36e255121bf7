#pragma once

#include <stdexcept>
#include <string>

namespace oacl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Task lifecycle misuse (begin/end ordering, mutating frozen state).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Bad dataset contents: empty splits, labels out of range.
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

class PretrainingError : public Error {
public:
    using Error::Error;
};

} // namespace oacl
