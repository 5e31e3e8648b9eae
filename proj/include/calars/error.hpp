#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace calars {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed LIBSVM input. `line()` is 1-based; 0 means no particular line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DataError : public Error {
public:
    using Error::Error;
};

/// Singular factor, non-PD Schur complement, or a direction that cannot be normalized.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// SPMD discipline violated: mismatched collectives, bad payloads, early exit.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace calars
