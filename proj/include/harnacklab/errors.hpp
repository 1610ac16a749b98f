#pragma once

#include <stdexcept>
#include <string>

namespace hlab {

enum class ErrorKind {
    ConeViolation,
    EigenFailure,
    NotPositiveDefinite,
    NegativeEntry,
    NoStrictLevel,
    NonPositiveKappa,
    NoEpsilonFound,
    ConvexityLost,
    PoleSingularity,
    StepRejected,
    Extinct,
    BisectionFailure,
    DegenerateCurvature,
    InsufficientResolution,
    ParseError,
    RangeError,
    IoError,
};

const char* to_string(ErrorKind kind);

// Base of every error the library throws. The kind is the stable,
// machine-readable part; what() carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define HLAB_DEFINE_ERROR(Name)                                                \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& detail) : Error(ErrorKind::Name, detail) {} \
    }

HLAB_DEFINE_ERROR(ConeViolation);
HLAB_DEFINE_ERROR(EigenFailure);
HLAB_DEFINE_ERROR(NotPositiveDefinite);
HLAB_DEFINE_ERROR(NegativeEntry);
HLAB_DEFINE_ERROR(NoStrictLevel);
HLAB_DEFINE_ERROR(NoEpsilonFound);
HLAB_DEFINE_ERROR(ConvexityLost);
HLAB_DEFINE_ERROR(PoleSingularity);
HLAB_DEFINE_ERROR(Extinct);
HLAB_DEFINE_ERROR(BisectionFailure);
HLAB_DEFINE_ERROR(DegenerateCurvature);
HLAB_DEFINE_ERROR(InsufficientResolution);
HLAB_DEFINE_ERROR(ParseError);
HLAB_DEFINE_ERROR(RangeError);
HLAB_DEFINE_ERROR(IoError);

#undef HLAB_DEFINE_ERROR

// A rejected time step carries the step size the caller should retry with.
class StepRejected : public Error {
public:
    StepRejected(const std::string& detail, double suggested_dt)
        : Error(ErrorKind::StepRejected, detail), suggested_dt_(suggested_dt) {}

    double suggested_dt() const noexcept { return suggested_dt_; }

private:
    double suggested_dt_;
};

}  // namespace hlab
