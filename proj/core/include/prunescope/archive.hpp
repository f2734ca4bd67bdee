#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "prunescope/tensor.hpp"

namespace prunescope {

inline constexpr int kArchiveFormatVersion = 1;

struct ArchiveManifest {
  int format_version = kArchiveFormatVersion;
  int epoch = -1;
  std::string spec_hash;
  std::string rng_state;
};

struct Archive {
  ArchiveManifest manifest;
  NamedTensorSet tensors;
};

// Layout (all integers little-endian):
//   "PSNT" | u32 version | u32 len, manifest JSON | u32 count |
//   count x { u32 len, name | u8 role | u8 rank | rank x u64 dim | float32 LE data }
std::string encode_archive(const NamedTensorSet& tensors, const ArchiveManifest& manifest);
Archive decode_archive(std::string_view bytes, const std::string& origin = "<memory>");

void write_archive(const std::filesystem::path& path, const NamedTensorSet& tensors, const ArchiveManifest& manifest);
Archive read_archive(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace prunescope
