#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dwc {

enum class Errc {
  NonFinite,
  Empty,
  LengthMismatch,
  IndexOutOfRange,
  ShapeMismatch,
  InvalidConfig,
  UnknownTap,
  UnknownLayer,
  SizeMismatch,
  NonPositiveVariance,
  GroupMismatch,
  DivergenceDetected,
  LayerMismatch,
  EmptyAccumulator,
  UnknownKind,
  OutOfRangeInput,
  BadMagic,
  VersionUnsupported,
  Truncated,
  ChecksumMismatch,
  Malformed,
  CountMismatch,
  Io,
  ProvenanceMismatch,
  EmptySuite,
  DuplicateGridPoint,
  MissingBaseline,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the library carries an Errc so callers (the CLI in
// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

}  // namespace dwc
