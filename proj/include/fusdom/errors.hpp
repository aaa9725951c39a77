#pragma once

#include <stdexcept>
#include <string>

namespace fusdom {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct TrainingError : Error { using Error::Error; };
struct SequenceLengthError : Error { using Error::Error; };
struct FeasibilityError : Error { using Error::Error; };

struct IoError : Error { using Error::Error; };
struct BadMagicError : IoError { using IoError::IoError; };
struct VersionError : IoError { using IoError::IoError; };
struct CrcError : IoError { using IoError::IoError; };
struct CheckpointFormatError : IoError { using IoError::IoError; };

}  // namespace fusdom
