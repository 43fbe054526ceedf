#pragma once

#include <stdexcept>
#include <string>

namespace icucast {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input problems: bad files, schema mismatches, invariant violations in data.
class DataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class DuplicateRecordError : public DataError {
public:
    using DataError::DataError;
};

class ValueError : public DataError {
public:
    using DataError::DataError;
};

class GapError : public DataError {
public:
    using DataError::DataError;
};

class LookupError : public DataError {
public:
    using DataError::DataError;
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

class ScoringError : public DataError {
public:
    using DataError::DataError;
};

// Numerical failures: bad domains, factorizations, non-convergent solves.
class NumericError : public Error {
public:
    using Error::Error;
};

class DomainError : public NumericError {
public:
    using NumericError::NumericError;
};

class FactorizationError : public NumericError {
public:
    using NumericError::NumericError;
};

class NonConvergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

class SelectionError : public NumericError {
public:
    using NumericError::NumericError;
};

class IntervalError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace icucast
