#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wizs {

enum class ErrorCode {
  // embedding-core
  kZeroVector,
  kNonFinite,
  kDimensionMismatch,
  kEmptySet,
  kDegenerateMean,
  // scoring
  kNoAlternatives,
  kDegenerateDifference,
  kDegenerateSilhouette,
  kDuplicateClass,
  kMissingEmbeddings,
  // zeroshot-eval
  kEmptyClass,
  kLengthMismatch,
  kDegenerateRanks,
  // calibration
  kInsufficientData,
  kInsufficientGroups,
  kSingularFit,
  kUnconvergedModel,
  // data-io
  kCorruptBlob,
  kMissingBlob,
  kInvalidManifest,
  kProviderUnavailable,
  kProviderShapeError,
  kPartialResult,
  // generic
  kInvalidArgument,
  kIo,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix; use when re-wrapping with more context.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

// Raised when a provider-backed generation step could only produce part of
// what was asked for. Carries the conforming subset.
class PartialResult : public Error {
 public:
  PartialResult(const std::string& message, std::vector<std::string> items)
      : Error(ErrorCode::kPartialResult, message), items_(std::move(items)) {}

  const std::vector<std::string>& items() const noexcept { return items_; }

 private:
  std::vector<std::string> items_;
};

inline std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kDegenerateMean: return "DegenerateMean";
    case ErrorCode::kNoAlternatives: return "NoAlternatives";
    case ErrorCode::kDegenerateDifference: return "DegenerateDifference";
    case ErrorCode::kDegenerateSilhouette: return "DegenerateSilhouette";
    case ErrorCode::kDuplicateClass: return "DuplicateClass";
    case ErrorCode::kMissingEmbeddings: return "MissingEmbeddings";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDegenerateRanks: return "DegenerateRanks";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kInsufficientGroups: return "InsufficientGroups";
    case ErrorCode::kSingularFit: return "SingularFit";
    case ErrorCode::kUnconvergedModel: return "UnconvergedModel";
    case ErrorCode::kCorruptBlob: return "CorruptBlob";
    case ErrorCode::kMissingBlob: return "MissingBlob";
    case ErrorCode::kInvalidManifest: return "InvalidManifest";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kProviderShapeError: return "ProviderShapeError";
    case ErrorCode::kPartialResult: return "PartialResult";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace wizs
