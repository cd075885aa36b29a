#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace leuko {

/// Failure categories raised by the library. Every public operation reports
/// errors by throwing leuko::Error carrying one of these codes.
enum class Errc {
  // ingestion
  MissingTag,
  Malformed,
  UnsupportedTransferSyntax,
  NoSlices,
  MissingSidecar,
  AmbiguousOrdering,
  // numerics and shapes
  DegenerateCalibration,
  TooFewSlices,
  DegenerateInput,
  ShapeMismatch,
  StaleCache,
  UnknownLayer,
  // training
  EmptySplit,
  SingleClassTrainSet,
  NonFinite,
  // evaluation
  LengthMismatch,
  EmptyInput,
  BadThreshold,
  EmptyClass,
  // configuration and I/O
  BadConfig,
  Io,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

}  // namespace leuko
