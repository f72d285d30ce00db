#pragma once

#include <stdexcept>
#include <string>

namespace decwatt {

/// Stable error codes, one per contract violation the library reports.
enum class Errc {
    // trace
    MalformedLine,
    RangeViolation,
    MissingStreamBegin,
    DuplicateStreamBegin,
    // features / models
    WrongKind,
    DimensionMismatch,
    MissingVariables,
    NonPositiveNormalizer,
    DomainError,
    // fit / eval
    InsufficientRows,
    TooFewRows,
    NonPositiveEnergy,
    EmptyList,
    BoundViolation,
    MissingFrameCount,
    NonMonotoneGroup,
    // simlab
    MismatchedTraces,
    TooFewSamples,
    NonPositiveMean,
    ConfigInvalid,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Bad or inconsistent input data (CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: domain violations, non-finite values (CLI exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Trace file violations carry the 1-based line number and, for range
/// violations, the offending field name.
class TraceFormatError : public DataError {
public:
    TraceFormatError(Errc code, int line_no, const std::string& field, const std::string& msg)
        : DataError(code, msg), line_no_(line_no), field_(field) {}
    int line_no() const noexcept { return line_no_; }
    const std::string& field() const noexcept { return field_; }

private:
    int line_no_;
    std::string field_;
};

inline TraceFormatError malformed_line(int line_no, const std::string& what) {
    return {Errc::MalformedLine, line_no, "",
            "line " + std::to_string(line_no) + ": malformed line: " + what};
}

inline TraceFormatError range_violation(int line_no, const std::string& field, const std::string& what) {
    return {Errc::RangeViolation, line_no, field,
            "line " + std::to_string(line_no) + ": field '" + field + "' out of range: " + what};
}

} // namespace decwatt
