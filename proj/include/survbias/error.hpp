#pragma once

#include <stdexcept>
#include <string>

namespace survbias {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (maps to CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (maps to CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during estimation (maps to CLI exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A coefficient diverged: the partial likelihood keeps increasing along a ray.
class MonotoneLikelihoodError : public NumericalError {
public:
    MonotoneLikelihoodError(const std::string& what, int coefficient)
        : NumericalError(what), coefficient_(coefficient) {}
    int coefficient() const noexcept { return coefficient_; }

private:
    int coefficient_;
};

}  // namespace survbias
