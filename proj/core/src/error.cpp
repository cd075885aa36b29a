#include "leuko/error.hpp"

namespace leuko {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MissingTag: return "MissingTag";
    case Errc::Malformed: return "Malformed";
    case Errc::UnsupportedTransferSyntax: return "UnsupportedTransferSyntax";
    case Errc::NoSlices: return "NoSlices";
    case Errc::MissingSidecar: return "MissingSidecar";
    case Errc::AmbiguousOrdering: return "AmbiguousOrdering";
    case Errc::DegenerateCalibration: return "DegenerateCalibration";
    case Errc::TooFewSlices: return "TooFewSlices";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::StaleCache: return "StaleCache";
    case Errc::UnknownLayer: return "UnknownLayer";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::SingleClassTrainSet: return "SingleClassTrainSet";
    case Errc::NonFinite: return "NonFinite";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::BadThreshold: return "BadThreshold";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::BadConfig: return "BadConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace leuko
