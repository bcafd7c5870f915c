#pragma once

#include <stdexcept>
#include <string>

namespace blockpred {

// Error classes map to distinct CLI exit codes (see tools/blockpred.cpp):
// config = 2, io/format = 3, numerical = 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File exists but its contents are not a valid artifact.
struct FormatError : IoError {
    using IoError::IoError;
};

struct VersionError : FormatError {
    using FormatError::FormatError;
};

struct ChecksumError : FormatError {
    using FormatError::FormatError;
};

struct TruncatedError : FormatError {
    using FormatError::FormatError;
};

// NaN/Inf detected in a loss or gradient, or a diverged training run.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace blockpred
