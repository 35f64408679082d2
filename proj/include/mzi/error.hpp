#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mzi {

/// Machine-readable failure classes. Every mzi exception carries exactly one.
enum class ErrorCode {
    // parser / topology validation
    syntax_error,
    dangling_port,
    duplicate_name,
    not_a_dag,
    no_source,
    // probes
    unknown_probe,
    target_not_occupied,
    // projectors / histories
    unknown_channel,
    channel_not_occupied,
    inconsistent_framework,
    non_commuting_projectors,
    incompatible_frameworks,
    // distributions / statistics
    zero_probability_condition,
    mixed_configurations,
    // weak values
    orthogonal_post_selection,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

/// Parse-time failure with a 1-based source position.
class ParseError : public Error {
public:
    ParseError(ErrorCode code, int line, int column, const std::string& message)
        : Error(code, "line " + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line),
          column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

/// Raised by refine_frameworks when the common refinement fails the
/// consistency test; carries the offending history pair.
class IncompatibleFrameworksError : public Error {
public:
    IncompatibleFrameworksError(double max_offdiag, std::pair<std::string, std::string> witness)
        : Error(ErrorCode::incompatible_frameworks,
                "refined family is inconsistent, max off-diagonal " + std::to_string(max_offdiag) +
                    " at " + witness.first + " vs " + witness.second),
          max_offdiag_(max_offdiag),
          witness_(std::move(witness)) {}

    double max_offdiag() const { return max_offdiag_; }
    const std::pair<std::string, std::string>& witness() const { return witness_; }

private:
    double max_offdiag_;
    std::pair<std::string, std::string> witness_;
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::syntax_error: return "SyntaxError";
        case ErrorCode::dangling_port: return "DanglingPort";
        case ErrorCode::duplicate_name: return "DuplicateName";
        case ErrorCode::not_a_dag: return "NotADag";
        case ErrorCode::no_source: return "NoSource";
        case ErrorCode::unknown_probe: return "UnknownProbe";
        case ErrorCode::target_not_occupied: return "TargetNotOccupiedAtSlot";
        case ErrorCode::unknown_channel: return "UnknownChannel";
        case ErrorCode::channel_not_occupied: return "ChannelNotOccupiedAtSlot";
        case ErrorCode::inconsistent_framework: return "InconsistentFramework";
        case ErrorCode::non_commuting_projectors: return "NonCommutingProjectors";
        case ErrorCode::incompatible_frameworks: return "IncompatibleFrameworks";
        case ErrorCode::zero_probability_condition: return "ZeroProbabilityCondition";
        case ErrorCode::mixed_configurations: return "MixedConfigurations";
        case ErrorCode::orthogonal_post_selection: return "OrthogonalPostSelection";
    }
    return "UnknownError";
}

}  // namespace mzi
