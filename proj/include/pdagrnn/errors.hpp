#pragma once

#include <stdexcept>
#include <string>

namespace pdagrnn {

/// Bad arguments, shapes or configuration. The CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failures while reading or writing project files. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LoadErrorKind { missing_file, malformed_header, payload_size };

class LoadError : public IoError {
public:
    LoadError(LoadErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
    LoadErrorKind kind() const noexcept { return kind_; }

private:
    LoadErrorKind kind_;
};

/// Non-finite values or other numeric breakdowns (exit code 2).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pdagrnn
