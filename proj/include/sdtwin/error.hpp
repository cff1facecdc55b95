// sdtwin error reporting
// A single exception type carrying a machine-checkable error code.
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdtwin {

enum class Errc {
    NonPositiveParameter,
    Overdamped,
    DegenerateMass,
    DegenerateStiffness,
    InvalidGrid,
    NegativeFrequency,
    InvalidFrequency,
    ResultOutOfRange,
    ComplexRoot,
    UndampedAmbiguity,
    AllObservationsRejected,
    DegenerateGate,
    NotASimplex,
    NonFiniteLikelihood,
    EmptyEnsemble,
    TargetNonFinite,
    ConfigInvalid,
    OptimizerFailed,
    InsufficientData,
    NonMonotoneTimestamps,
    ParseError,
    IoError,
    ProvenanceMismatch,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::NonPositiveParameter: return "NonPositiveParameter";
    case Errc::Overdamped: return "Overdamped";
    case Errc::DegenerateMass: return "DegenerateMass";
    case Errc::DegenerateStiffness: return "DegenerateStiffness";
    case Errc::InvalidGrid: return "InvalidGrid";
    case Errc::NegativeFrequency: return "NegativeFrequency";
    case Errc::InvalidFrequency: return "InvalidFrequency";
    case Errc::ResultOutOfRange: return "ResultOutOfRange";
    case Errc::ComplexRoot: return "ComplexRoot";
    case Errc::UndampedAmbiguity: return "UndampedAmbiguity";
    case Errc::AllObservationsRejected: return "AllObservationsRejected";
    case Errc::DegenerateGate: return "DegenerateGate";
    case Errc::NotASimplex: return "NotASimplex";
    case Errc::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case Errc::EmptyEnsemble: return "EmptyEnsemble";
    case Errc::TargetNonFinite: return "TargetNonFinite";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::OptimizerFailed: return "OptimizerFailed";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::ProvenanceMismatch: return "ProvenanceMismatch";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what),
          code_(code) {}

    Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

} // namespace sdtwin
