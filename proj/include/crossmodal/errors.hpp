#pragma once

#include <stdexcept>
#include <string>

namespace crossmodal {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/precondition violations on numeric operations.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration values (non-positive dims, bad rates, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Batch construction could not satisfy its constraints.
struct SamplingError : Error {
    using Error::Error;
};

// Training aborted (non-finite loss or gradient).
struct TrainingError : Error {
    using Error::Error;
};

// Malformed corpus / checkpoint / CSV input. `kind` distinguishes the
// failure classes tests care about; the message carries the byte offset,
// record index or line number.
struct FormatError : Error {
    enum class Kind {
        BadMagic,
        VersionMismatch,
        Truncated,
        DimMismatch,
        DuplicateId,
        InvalidRecord,
        ParseError,
        Io,
    };

    FormatError(Kind k, const std::string& message) : Error(message), kind(k) {}

    Kind kind;
};

}  // namespace crossmodal
