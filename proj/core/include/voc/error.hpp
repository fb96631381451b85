#pragma once

#include <stdexcept>
#include <string>

namespace voc {

/// Base class for all errors thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller-supplied value violated a precondition (bad shape, bad index, ...).
struct InvalidInputError : Error {
  using Error::Error;
};

/// Static configuration is inconsistent (e.g. render size not divisible by grid dims).
struct ConfigError : Error {
  using Error::Error;
};

/// The training corpus cannot support the requested operation
/// (fewer distinct feature vectors than requested codebook entries).
struct DegenerateCorpusError : Error {
  using Error::Error;
};

/// The dataset lacks a field the operation needs (actions, rewards).
struct UnsupportedDatasetError : Error {
  using Error::Error;
};

/// Inference was requested for a conditioning state the model never saw.
struct UnseenConditioningError : Error {
  using Error::Error;
};

/// Training produced a non-finite loss or gradient.
struct TrainingDivergenceError : Error {
  using Error::Error;
};

/// File could not be read, written, or parsed.
struct IoError : Error {
  using Error::Error;
};

/// A condition the library guarantees internally failed anyway.
struct InternalError : Error {
  using Error::Error;
};

}  // namespace voc
