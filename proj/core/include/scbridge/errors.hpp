#pragma once

#include <stdexcept>
#include <string>

namespace scbridge {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An operation was invoked on an object in the wrong state (e.g. backward without a recorded forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// A scalar argument lies outside its admissible range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Malformed numeric input: non-finite values, degenerate vectors, invalid probabilities.
class InputError : public Error {
public:
    using Error::Error;
};

/// Problems with datasets and files: parse failures, missing controls, empty splits, I/O.
class DataError : public Error {
public:
    using Error::Error;
};

/// Unknown cell type or perturbation name/id.
class VocabularyError : public DataError {
public:
    using DataError::DataError;
};

/// Numerical breakdown during training or sampling (non-finite loss or predictor output).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace scbridge
