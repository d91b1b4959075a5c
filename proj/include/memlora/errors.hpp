#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memlora {

// Root of every error the library throws on purpose. Precondition violations
// on public calls use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Persisted bank/index bytes that are corrupt, truncated or from another
// format version.
class DecodeError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data is inconsistent (unknown conversation, dangling image, ...).
class DataError : public Error {
public:
    using Error::Error;
};

class PromptError : public Error {
public:
    PromptError(std::string message, std::string placeholder)
        : Error(std::move(message)), placeholder_(std::move(placeholder)) {}

    const std::string& placeholder() const noexcept { return placeholder_; }

private:
    std::string placeholder_;
};

enum class ParseErrorKind {
    NoJsonFound,
    KeyMissing,
    UnbalancedBraces,
    BadEvent,
    BadId,
    BadValue,
    AmbiguousLabel,
    MissingAnswerField,
};

std::string_view to_string(ParseErrorKind kind);

class ParseError : public Error {
public:
    ParseError(ParseErrorKind kind, const std::string& detail)
        : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

    ParseErrorKind kind() const noexcept { return kind_; }

private:
    ParseErrorKind kind_;
};

enum class BackendErrorKind {
    Transport,
    Status,
    MalformedBody,
    Timeout,
    ScriptMiss,
    Capability,
};

std::string_view to_string(BackendErrorKind kind);

class BackendError : public Error {
public:
    BackendError(BackendErrorKind kind, const std::string& detail, int status = 0)
        : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind), status_(status) {}

    BackendErrorKind kind() const noexcept { return kind_; }
    int status() const noexcept { return status_; }

    // Transport failures, timeouts and 5xx responses are worth another attempt.
    bool retryable() const noexcept {
        return kind_ == BackendErrorKind::Transport || kind_ == BackendErrorKind::Timeout ||
               (kind_ == BackendErrorKind::Status && status_ >= 500);
    }

private:
    BackendErrorKind kind_;
    int status_;
};

} // namespace memlora
