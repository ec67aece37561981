// SPDX-License-Identifier: Apache-2.0
#include "hkd/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hkd/errors.hpp"

namespace hkd {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("archive truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_archive(std::span<const ArchiveRecord> records) {
  std::vector<std::uint8_t> out(std::begin(kArchiveMagic), std::end(kArchiveMagic));
  put_le<std::uint32_t>(out, kArchiveVersion);
  put_le<std::uint64_t>(out, records.size());
  for (const ArchiveRecord& r : records) {
    if (r.values.size() != numel(r.shape)) {
      throw DimensionError("archive record '" + r.name + "' has " +
                           std::to_string(r.values.size()) + " values for shape " +
                           shape_string(r.shape));
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t d : r.shape) put_le<std::uint64_t>(out, d);
    for (double v : r.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<ArchiveRecord> decode_archive(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(sizeof(kArchiveMagic));
  if (std::memcmp(magic.data(), kArchiveMagic, sizeof(kArchiveMagic)) != 0) {
    throw FormatError("not an archive (bad magic)");
  }
  const auto version = in.get_le<std::uint32_t>();
  if (version != kArchiveVersion) {
    throw FormatError("unsupported archive version " + std::to_string(version));
  }
  const auto count = in.get_le<std::uint64_t>();
  std::vector<ArchiveRecord> records;
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveRecord r;
    const auto name_len = in.get_le<std::uint32_t>();
    auto name = in.take(name_len);
    r.name.assign(name.begin(), name.end());
    const auto rank = in.get_le<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) {
      r.shape.push_back(static_cast<std::size_t>(in.get_le<std::uint64_t>()));
    }
    const std::size_t n = numel(r.shape);
    if (n > bytes.size()) throw FormatError("archive record '" + r.name + "' is too large");
    r.values.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      r.values.push_back(std::bit_cast<double>(in.get_le<std::uint64_t>()));
    }
    records.push_back(std::move(r));
  }
  if (!in.done()) throw FormatError("trailing bytes after archive records");
  return records;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed for " + path.string());
}

void write_archive(const std::filesystem::path& path, std::span<const ArchiveRecord> records) {
  write_file_bytes(path, encode_archive(records));
}

std::vector<ArchiveRecord> read_archive(const std::filesystem::path& path) {
  return decode_archive(read_file_bytes(path));
}

}  // namespace hkd
