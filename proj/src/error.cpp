#include "thbench/error.hpp"

namespace thbench {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::kDegenerateFace: return "degenerate-face";
    case ErrorCode::kOutOfFrame: return "out-of-frame";
    case ErrorCode::kInsufficientSamples: return "insufficient-samples";
    case ErrorCode::kProviderLoad: return "provider-load";
    case ErrorCode::kProviderFault: return "provider-fault";
    case ErrorCode::kDegenerateEmbedding: return "degenerate-embedding";
    case ErrorCode::kDegenerateFeature: return "degenerate-feature";
    case ErrorCode::kPairing: return "pairing";
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kTrainingFault: return "training-fault";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace thbench
