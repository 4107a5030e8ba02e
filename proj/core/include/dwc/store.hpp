#pragma once

// Single-file archives for models (.dwm), targets (.dwt) and datasets (.dwd).
//
// Layout, all integers little-endian:
//   0   magic          4 bytes, "DWCM" / "DWCT" / "DWCD"
//   4   version        u16, major in the high byte
//   6   kind           u16, 1 model, 2 targets, 3 dataset
//   8   meta_len       u32
//   12  payload_len    u64
//   20  metadata       meta_len bytes of UTF-8 JSON
//   ..  payload        payload_len bytes
//   ..  digest         32 bytes, SHA-256 over metadata || payload
// The digest is also the archive's identity: its hex form is what other
// archives and reports record as the provenance hash.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dwc/dataset.hpp"
#include "dwc/model.hpp"
#include "dwc/otcore.hpp"

namespace dwc {

enum class ArchiveKind : std::uint16_t { Model = 1, Targets = 2, Dataset = 3 };

inline constexpr std::uint16_t kArchiveVersion = 0x0100;

struct Archive {
  ArchiveKind kind{};
  std::uint16_t version = kArchiveVersion;
  std::string metadata;  // JSON text
  std::vector<std::uint8_t> payload;
  std::string hash;  // hex digest, filled by read/write
};

// Encodes and decodes the container. decode throws BadMagic,
// VersionUnsupported (newer major), Truncated, Malformed (trailing bytes or
// unknown kind) and ChecksumMismatch.
std::vector<std::uint8_t> encode_archive(const Archive& a);
Archive decode_archive(std::span<const std::uint8_t> bytes, ArchiveKind expected);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// Writes atomically (temp file + rename) and returns the provenance hash.
// `extra` is a JSON object merged into the metadata under "info".
std::string save_model(const std::filesystem::path& path, const Model& model,
                       const std::string& extra_json = "{}");
Model load_model(const std::filesystem::path& path, std::string* metadata_json = nullptr,
                 std::string* hash = nullptr);

std::string save_targets(const std::filesystem::path& path,
                         const std::map<std::string, TargetDistribution>& targets,
                         const std::string& extra_json = "{}");
std::map<std::string, TargetDistribution> load_targets(const std::filesystem::path& path,
                                                       std::string* metadata_json = nullptr,
                                                       std::string* hash = nullptr);

// Pixels are stored as u8 = round(255 x) and read back as u8 / 255, which is
// exact for images already on that grid.
std::string save_dataset(const std::filesystem::path& path, const Dataset& data,
                         const std::string& extra_json = "{}");
Dataset load_dataset(const std::filesystem::path& path, std::string* metadata_json = nullptr,
                     std::string* hash = nullptr);

// Provenance hash of any archive without decoding its payload type.
std::string archive_hash(const std::filesystem::path& path);

// Standard big-endian IDX pair (0x00000803 images, 0x00000801 labels).
// Throws BadMagic, CountMismatch, Truncated, Io.
Dataset read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// In-memory model codec used by save_model/load_model.
Archive model_to_archive(const Model& model, const std::string& extra_json = "{}");
Model model_from_archive(const Archive& a);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dwc
