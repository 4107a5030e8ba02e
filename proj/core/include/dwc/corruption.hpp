#pragma once

// Severity-parameterized image corruptions. Every random draw comes from a
// CounterRng keyed on (seed, sample index, kind, severity), so any single
// corrupted sample can be regenerated on its own.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dwc/dataset.hpp"
#include "dwc/tensor.hpp"

namespace dwc {

enum class CorruptionKind : std::uint8_t {
  Identity,
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  Brightness,
  Contrast,
  FogHaze,
  MotionBlur,
  Pixelate,
};

inline constexpr std::array<CorruptionKind, 9> kAllCorruptions = {
    CorruptionKind::Identity,   CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise,
    CorruptionKind::ImpulseNoise, CorruptionKind::Brightness, CorruptionKind::Contrast,
    CorruptionKind::FogHaze,    CorruptionKind::MotionBlur,    CorruptionKind::Pixelate};

std::string_view to_string(CorruptionKind k) noexcept;
CorruptionKind parse_kind(std::string_view name);  // throws UnknownKind
bool is_noise(CorruptionKind k) noexcept;           // gaussian, shot, impulse

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Identity;
  int severity = 1;  // 1..5, ignored for identity
  std::uint64_t seed = 0;

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

// Per-kind parameter for severities 1..5.
class SeverityTable {
 public:
  // The shipped version-1 table.
  static SeverityTable defaults();
  // Throws InvalidConfig on schema errors or an unsupported version.
  static SeverityTable from_json(std::string_view text);
  static SeverityTable from_file(const std::filesystem::path& path);

  double value(CorruptionKind k, int severity) const;
  int version() const noexcept { return version_; }
  // Canonical JSON text; hash() is its SHA-256.
  std::string to_json() const;
  std::string hash() const;

 private:
  int version_ = 1;
  std::array<std::array<double, 5>, kAllCorruptions.size()> values_{};
};

// Corrupts one (h, w, c) image whose values lie in [0, 1]. `index` is the
// sample's position in its dataset and enters the random key. Throws
// OutOfRangeInput, UnknownKind (severity outside 1..5) and ShapeMismatch.
Tensor apply(const Tensor& image, const CorruptionSpec& spec, const SeverityTable& table,
             std::uint64_t index = 0);

// Parses "impulse_noise:5,fog_haze:1-5,identity" into specs sharing `seed`.
std::vector<CorruptionSpec> parse_suite(std::string_view text, std::uint64_t seed);

// Lazy (spec, sample) product over a dataset, spec-major. The dataset must
// outlive the suite.
class CorruptedSuite {
 public:
  struct Item {
    CorruptionSpec spec;
    std::size_t sample = 0;
    Tensor image;  // (h, w, c)
    int label = 0;
  };

  CorruptedSuite(const Dataset& data, std::vector<CorruptionSpec> specs, SeverityTable table);

  std::size_t size() const noexcept { return specs_.size() * data_->size(); }
  const std::vector<CorruptionSpec>& specs() const noexcept { return specs_; }
  const SeverityTable& table() const noexcept { return table_; }
  Item at(std::size_t k) const;

  // Corrupts samples [begin, end) of the dataset under one spec as a batch.
  Tensor batch(const CorruptionSpec& spec, std::size_t begin, std::size_t end) const;

 private:
  const Dataset* data_;
  std::vector<CorruptionSpec> specs_;
  SeverityTable table_;
};

}  // namespace dwc
