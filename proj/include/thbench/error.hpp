#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thbench {

enum class ErrorCode {
  kInvalidArgument,
  kDegenerateGeometry,
  kDegenerateFace,
  kOutOfFrame,
  kInsufficientSamples,
  kProviderLoad,
  kProviderFault,
  kDegenerateEmbedding,
  kDegenerateFeature,
  kPairing,
  kInvalidInput,
  kTrainingFault,
  kConfiguration,
  kPrecondition,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (and the harness failure log) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when training produces a non-finite loss. `last_checkpoint` names the
/// most recent checkpoint written before the fault (empty if none was written).
class TrainingFault : public Error {
 public:
  TrainingFault(const std::string& what, std::string last_checkpoint)
      : Error(ErrorCode::kTrainingFault, what), last_checkpoint_(std::move(last_checkpoint)) {}

  const std::string& last_checkpoint() const noexcept { return last_checkpoint_; }

 private:
  std::string last_checkpoint_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace thbench
