#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace latskg {

enum class Errc {
  SingularBasis,
  DimensionMismatch,
  DimensionTooLarge,
  NotNested,
  IndexTooLarge,
  NonPositiveSigma,
  NotLatticePoint,
  MethodUnsupported,
  NonBracketed,
  InvalidDistribution,
  QuadratureFailure,
  RankDeficientCode,
  DegenerateChain,
  ConstructionFailed,
  NotDegradable,
  NotPSD,
  InvalidPublicMessage,
  EnumerationTooLarge,
  KeySpaceTooLarge,
  ConfigError,
  InvalidArgument,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::SingularBasis: return "SingularBasis";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DimensionTooLarge: return "DimensionTooLarge";
    case Errc::NotNested: return "NotNested";
    case Errc::IndexTooLarge: return "IndexTooLarge";
    case Errc::NonPositiveSigma: return "NonPositiveSigma";
    case Errc::NotLatticePoint: return "NotLatticePoint";
    case Errc::MethodUnsupported: return "MethodUnsupported";
    case Errc::NonBracketed: return "NonBracketed";
    case Errc::InvalidDistribution: return "InvalidDistribution";
    case Errc::QuadratureFailure: return "QuadratureFailure";
    case Errc::RankDeficientCode: return "RankDeficientCode";
    case Errc::DegenerateChain: return "DegenerateChain";
    case Errc::ConstructionFailed: return "ConstructionFailed";
    case Errc::NotDegradable: return "NotDegradable";
    case Errc::NotPSD: return "NotPSD";
    case Errc::InvalidPublicMessage: return "InvalidPublicMessage";
    case Errc::EnumerationTooLarge: return "EnumerationTooLarge";
    case Errc::KeySpaceTooLarge: return "KeySpaceTooLarge";
    case Errc::ConfigError: return "ConfigError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

inline void require_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    fail(Errc::NonPositiveSigma, "sigma must be positive and finite");
}

}  // namespace latskg
