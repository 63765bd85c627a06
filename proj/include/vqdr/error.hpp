#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vqdr {

enum class ErrorCode {
  InvalidArgument,
  IoFailure,
  UnsupportedFormat,
  CorruptHeader,
  EmptyAudio,
  InsufficientUtterances,
  UnknownSpeaker,
  NoCommonUtterances,
  DuplicateEntry,
  AudioTooShort,
  InvalidConfig,
  InvalidBand,
  TooFewPoints,
  DimensionMismatch,
  NonFiniteInput,
  CodeOutOfRange,
  BadMagic,
  VersionMismatch,
  EmptyInput,
  NoComparablePairs,
  ZeroVector,
  BadPerplexity,
  DegenerateVariance,
  TooFewGroups,
  LengthMismatch,
  InsufficientStimuli,
  UnpairedUtterance,
  MissingReference,
  BadConfidence,
  UnknownTrial,
  DuplicateResponse,
  UnknownPlan,
  UnknownSession,
  OutOfOrder,
  PlanComplete,
  UnknownStimulus,
  ParseError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::InsufficientUtterances: return "InsufficientUtterances";
    case ErrorCode::UnknownSpeaker: return "UnknownSpeaker";
    case ErrorCode::NoCommonUtterances: return "NoCommonUtterances";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::AudioTooShort: return "AudioTooShort";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::CodeOutOfRange: return "CodeOutOfRange";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NoComparablePairs: return "NoComparablePairs";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::BadPerplexity: return "BadPerplexity";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientStimuli: return "InsufficientStimuli";
    case ErrorCode::UnpairedUtterance: return "UnpairedUtterance";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::BadConfidence: return "BadConfidence";
    case ErrorCode::UnknownTrial: return "UnknownTrial";
    case ErrorCode::DuplicateResponse: return "DuplicateResponse";
    case ErrorCode::UnknownPlan: return "UnknownPlan";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::PlanComplete: return "PlanComplete";
    case ErrorCode::UnknownStimulus: return "UnknownStimulus";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI exit codes, HTTP status mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace vqdr
