#pragma once

#include <stdexcept>
#include <string>

namespace vicc {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or argument contract violated by the caller.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Configuration or usage problem; the CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Binary file format errors. Each failure mode has its own type so callers
// can tell a foreign file from a damaged one.
class FormatError : public IoError {
public:
    using IoError::IoError;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};

class DimOverflowError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace vicc
