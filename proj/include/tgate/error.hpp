#ifndef TGATE_ERROR_HPP
#define TGATE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace tgate {

enum class ErrorKind {
    InvalidArgument,
    OutOfRange,
    CutoffTooSmall,
    IntegrationFailure,
    NoSolution,
    InfeasibleKeyframe,
    ClampViolation,
    TrajectoryFailure,
    Resolution,
    CalibrationFailure,
    RescanRequired,
    InfeasibleCompensation,
    EstimationFailure,
    Config,
};

inline const char *error_kind_name(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can map it
/// onto an exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {
    }

    ErrorKind kind() const noexcept {
        return kind_;
    }

private:
    ErrorKind kind_;
};

inline const char *error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument:
            return "invalid-argument";
        case ErrorKind::OutOfRange:
            return "out-of-range";
        case ErrorKind::CutoffTooSmall:
            return "cutoff-too-small";
        case ErrorKind::IntegrationFailure:
            return "integration-failure";
        case ErrorKind::NoSolution:
            return "no-solution";
        case ErrorKind::InfeasibleKeyframe:
            return "infeasible-keyframe";
        case ErrorKind::ClampViolation:
            return "clamp-violation";
        case ErrorKind::TrajectoryFailure:
            return "trajectory-failure";
        case ErrorKind::Resolution:
            return "resolution";
        case ErrorKind::CalibrationFailure:
            return "calibration-failure";
        case ErrorKind::RescanRequired:
            return "rescan-required";
        case ErrorKind::InfeasibleCompensation:
            return "infeasible-compensation";
        case ErrorKind::EstimationFailure:
            return "estimation-failure";
        case ErrorKind::Config:
            return "config";
    }
    return "unknown";
}

}  // namespace tgate

#endif  // TGATE_ERROR_HPP
