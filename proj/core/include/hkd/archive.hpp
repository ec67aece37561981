// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hkd/tensor.hpp"

namespace hkd {

/// Flat record archive used for checkpoints and debug dumps.
///
/// Layout (all integers little-endian):
///   magic "HKDARCH\0" (8 bytes), u32 version, u64 record count, then per record
///   u32 name length, name bytes, u32 rank, rank x u64 dims,
///   prod(dims) x f64 values (IEEE-754 binary64, little-endian).
inline constexpr char kArchiveMagic[8] = {'H', 'K', 'D', 'A', 'R', 'C', 'H', '\0'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct ArchiveRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const ArchiveRecord&) const = default;
};

std::vector<std::uint8_t> encode_archive(std::span<const ArchiveRecord> records);
/// Throws FormatError on a bad magic, unknown version or truncated input.
std::vector<ArchiveRecord> decode_archive(std::span<const std::uint8_t> bytes);

void write_archive(const std::filesystem::path& path, std::span<const ArchiveRecord> records);
std::vector<ArchiveRecord> read_archive(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace hkd
