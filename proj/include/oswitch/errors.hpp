#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oswitch {

enum class ErrorKind {
    NonTransient,
    InvalidRates,
    InvalidArgument,
    DimensionMismatch,
    GridMismatch,
    GridTooCoarse,
    InvalidCoupling,
    SentinelArithmetic,
    RootBracketFailure,
    MonotonicityBroken,
    NoConvergence,
    TerminalDominationFailed,
    EnvelopeDominationFailed,
    NonDecoupledDriver,
    UnsupportedTerminal,
    NoLoopViolation,
    InvalidAction,
    CapExceeded,
    MaskCycle,
    InvariantViolated,
    SchemaError,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every solver failure. The kind is stable and is what
/// tests and the CLI dispatch on; the message carries context.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct SchemaIssue {
    std::string path;
    std::string message;
};

class SchemaError : public Error {
public:
    explicit SchemaError(std::vector<SchemaIssue> issues);
    const std::vector<SchemaIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<SchemaIssue> issues_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace oswitch
