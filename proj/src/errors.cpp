#include "oswitch/errors.hpp"

namespace oswitch {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonTransient: return "NonTransient";
        case ErrorKind::InvalidRates: return "InvalidRates";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::GridMismatch: return "GridMismatch";
        case ErrorKind::GridTooCoarse: return "GridTooCoarse";
        case ErrorKind::InvalidCoupling: return "InvalidCoupling";
        case ErrorKind::SentinelArithmetic: return "SentinelArithmetic";
        case ErrorKind::RootBracketFailure: return "RootBracketFailure";
        case ErrorKind::MonotonicityBroken: return "MonotonicityBroken";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::TerminalDominationFailed: return "TerminalDominationFailed";
        case ErrorKind::EnvelopeDominationFailed: return "EnvelopeDominationFailed";
        case ErrorKind::NonDecoupledDriver: return "NonDecoupledDriver";
        case ErrorKind::UnsupportedTerminal: return "UnsupportedTerminal";
        case ErrorKind::NoLoopViolation: return "NoLoopViolation";
        case ErrorKind::InvalidAction: return "InvalidAction";
        case ErrorKind::CapExceeded: return "CapExceeded";
        case ErrorKind::MaskCycle: return "MaskCycle";
        case ErrorKind::InvariantViolated: return "InvariantViolated";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

namespace {
std::string join_issues(const std::vector<SchemaIssue>& issues) {
    std::string out;
    for (const auto& issue : issues) {
        if (!out.empty()) out += "; ";
        out += issue.path + ": " + issue.message;
    }
    return out;
}
}  // namespace

SchemaError::SchemaError(std::vector<SchemaIssue> issues)
    : Error(ErrorKind::SchemaError, join_issues(issues)), issues_(std::move(issues)) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace oswitch
