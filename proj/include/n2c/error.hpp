#pragma once

#include <stdexcept>
#include <string>

namespace n2c {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments, configs, shapes or file contents. The CLI maps it to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent files on disk.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during a computation (NaN loss, divergence).
class ComputeError : public Error {
public:
    using Error::Error;
};

} // namespace n2c
