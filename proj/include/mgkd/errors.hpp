#pragma once

#include <stdexcept>
#include <string>

namespace mgkd {

/// Precondition or shape violation in a call.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A file or artifact that a command depends on is absent.
class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed on-disk data (truncated checkpoint, corrupt dataset record).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint written by a different format version.
class IncompatibleVersion : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A loss or metric became NaN/Inf during training.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input for which a metric is undefined (e.g. CKA on zero-variance data).
class DegenerateInput : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid experiment configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace mgkd
