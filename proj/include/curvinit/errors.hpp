#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace curvinit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed argument: wrong dimensions, out-of-range parameters.
class InvalidInput : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class IndexOutOfRange : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// A statistic is undefined on the given sample (e.g. constant sequence).
class DegenerateInput : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// A computation produced NaN or infinity.
class NonFinite : public Error {
public:
    using Error::Error;
};

/// Scale calibration could not bracket the target eigenvalue.
class BracketNotFound : public Error {
public:
    using Error::Error;
};

/// SGD produced a non-finite loss.
class Divergence : public NonFinite {
public:
    Divergence(const std::string& what, std::size_t batch_index)
        : NonFinite(what + " (batch " + std::to_string(batch_index) + ")"), batch_(batch_index) {}

    std::size_t batch_index() const noexcept { return batch_; }

private:
    std::size_t batch_;
};

/// Unreadable or malformed data files.
class DataError : public Error {
public:
    using Error::Error;
};

/// Bad experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace curvinit
