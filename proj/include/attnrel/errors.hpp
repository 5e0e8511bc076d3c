#pragma once

#include <stdexcept>
#include <string>

namespace attnrel {

// Invalid argument to a library operation: shape mismatch, index out of
// range, malformed request.
class RejectedInput : public std::invalid_argument {
public:
    explicit RejectedInput(const std::string& what) : std::invalid_argument(what) {}
};

// Invalid model/run configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / serialization failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, diverging training, failed numeric oracle.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Trace inconsistent with the requested operation, e.g. gradients missing
// or record kinds that do not match the architecture.
class TraceError : public std::runtime_error {
public:
    explicit TraceError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace attnrel
