#include "memlora/errors.hpp"

namespace memlora {

std::string_view to_string(ParseErrorKind kind) {
    switch (kind) {
    case ParseErrorKind::NoJsonFound: return "NoJsonFound";
    case ParseErrorKind::KeyMissing: return "KeyMissing";
    case ParseErrorKind::UnbalancedBraces: return "UnbalancedBraces";
    case ParseErrorKind::BadEvent: return "BadEvent";
    case ParseErrorKind::BadId: return "BadId";
    case ParseErrorKind::BadValue: return "BadValue";
    case ParseErrorKind::AmbiguousLabel: return "AmbiguousLabel";
    case ParseErrorKind::MissingAnswerField: return "MissingAnswerField";
    }
    return "ParseError";
}

std::string_view to_string(BackendErrorKind kind) {
    switch (kind) {
    case BackendErrorKind::Transport: return "transport";
    case BackendErrorKind::Status: return "status";
    case BackendErrorKind::MalformedBody: return "malformed-body";
    case BackendErrorKind::Timeout: return "timeout";
    case BackendErrorKind::ScriptMiss: return "script-miss";
    case BackendErrorKind::Capability: return "capability";
    }
    return "backend";
}

} // namespace memlora
