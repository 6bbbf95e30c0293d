#include "triage/binary_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "triage/errors.hpp"

namespace triage::io {

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes_.append(s);
}

void BinaryWriter::f32s(std::span<const float> v) {
  u64(v.size());
  for (float x : v) f32(x);
}

void BinaryWriter::f64s(std::span<const double> v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void BinaryWriter::u32s(std::span<const std::uint32_t> v) {
  u64(v.size());
  for (auto x : v) u32(x);
}

void BinaryWriter::strs(std::span<const std::string> v) {
  u64(v.size());
  for (const auto& s : v) str(s);
}

std::string_view BinaryReader::take(std::size_t n) {
  if (n > bytes_.size() - pos_) {
    throw TruncatedError(what_ + ": unexpected end of data at byte " +
                         std::to_string(pos_));
  }
  auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::size_t BinaryReader::count(std::size_t element_size) {
  const std::uint64_t n = u64();
  if (element_size != 0 && n > (bytes_.size() - pos_) / element_size) {
    throw TruncatedError(what_ + ": array length " + std::to_string(n) +
                         " exceeds remaining data");
  }
  return static_cast<std::size_t>(n);
}

void BinaryReader::expect_magic(std::string_view tag) {
  if (bytes_.size() - pos_ < tag.size() ||
      bytes_.substr(pos_, tag.size()) != tag) {
    throw FormatError(what_ + ": bad magic bytes (expected \"" +
                      std::string(tag) + "\")");
  }
  pos_ += tag.size();
}

std::uint32_t BinaryReader::expect_version(std::uint32_t supported) {
  const std::uint32_t v = u32();
  if (v != supported) throw VersionError(what_, v, supported);
  return v;
}

std::uint8_t BinaryReader::u8() {
  return static_cast<std::uint8_t>(take(1)[0]);
}

std::uint32_t BinaryReader::u32() {
  const auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i]))
         << (8 * i);
  }
  return v;
}

std::uint64_t BinaryReader::u64() {
  const auto b = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i]))
         << (8 * i);
  }
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }
double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  return std::string(take(n));
}

std::vector<float> BinaryReader::f32s() {
  std::vector<float> v(count(4));
  for (auto& x : v) x = f32();
  return v;
}

std::vector<double> BinaryReader::f64s() {
  std::vector<double> v(count(8));
  for (auto& x : v) x = f64();
  return v;
}

std::vector<std::uint32_t> BinaryReader::u32s() {
  std::vector<std::uint32_t> v(count(4));
  for (auto& x : v) x = u32();
  return v;
}

std::vector<std::string> BinaryReader::strs() {
  std::vector<std::string> v(count(4));
  for (auto& s : v) s = str();
  return v;
}

void BinaryReader::expect_end() const {
  if (pos_ != bytes_.size()) {
    throw FormatError(what_ + ": " + std::to_string(bytes_.size() - pos_) +
                      " trailing bytes");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos),
                  static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace triage::io
