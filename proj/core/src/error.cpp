#include "dwc/error.hpp"

namespace dwc {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::NonFinite: return "NonFinite";
    case Errc::Empty: return "Empty";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::UnknownTap: return "UnknownTap";
    case Errc::UnknownLayer: return "UnknownLayer";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::NonPositiveVariance: return "NonPositiveVariance";
    case Errc::GroupMismatch: return "GroupMismatch";
    case Errc::DivergenceDetected: return "DivergenceDetected";
    case Errc::LayerMismatch: return "LayerMismatch";
    case Errc::EmptyAccumulator: return "EmptyAccumulator";
    case Errc::UnknownKind: return "UnknownKind";
    case Errc::OutOfRangeInput: return "OutOfRangeInput";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::Truncated: return "Truncated";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::Malformed: return "Malformed";
    case Errc::CountMismatch: return "CountMismatch";
    case Errc::Io: return "Io";
    case Errc::ProvenanceMismatch: return "ProvenanceMismatch";
    case Errc::EmptySuite: return "EmptySuite";
    case Errc::DuplicateGridPoint: return "DuplicateGridPoint";
    case Errc::MissingBaseline: return "MissingBaseline";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace dwc
