/**
 * @file error.hpp
 * @brief Exception types shared by every vle module.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace vle {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent user input (compositions, records, names).
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration of a solver, network or command.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed, or the file is not in the expected format.
class IoError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure could not produce a usable answer.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace vle
