#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sctraj {

enum class ErrorKind {
    FocalPoint,
    CausticDivergence,
    NoConvergence,
    NearCaustic,
    Escaped,
    StepFailure,
    NoTrajectory,
    MissingMain,
    DomainError,
    BoundaryLeak,
    NotConverged,
    ConfigError,
    GridMismatch,
    IoError,
};

inline std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::FocalPoint: return "FocalPoint";
    case ErrorKind::CausticDivergence: return "CausticDivergence";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NearCaustic: return "NearCaustic";
    case ErrorKind::Escaped: return "Escaped";
    case ErrorKind::StepFailure: return "StepFailure";
    case ErrorKind::NoTrajectory: return "NoTrajectory";
    case ErrorKind::MissingMain: return "MissingMain";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::BoundaryLeak: return "BoundaryLeak";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a kind so callers can branch
/// on it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace sctraj
