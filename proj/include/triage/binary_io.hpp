#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace triage::io {

// Little-endian encoder for the binary artifact formats. All multi-byte
// values are written LE regardless of host order.
class BinaryWriter {
 public:
  void magic(std::string_view tag) { bytes_.append(tag); }
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v);
  void f64(double v);
  void str(std::string_view s);
  void f32s(std::span<const float> v);
  void f64s(std::span<const double> v);
  void u32s(std::span<const std::uint32_t> v);
  void strs(std::span<const std::string> v);

  const std::string& bytes() const noexcept { return bytes_; }
  std::string take() && { return std::move(bytes_); }

 private:
  std::string bytes_;
};

// Bounds-checked reader; any read past the end throws TruncatedError.
class BinaryReader {
 public:
  BinaryReader(std::string_view bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  // Throws FormatError if the next bytes are not `tag`.
  void expect_magic(std::string_view tag);
  // Reads a u32 version; throws VersionError if it differs from `supported`.
  std::uint32_t expect_version(std::uint32_t supported);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32();
  double f64();
  std::string str();
  std::vector<float> f32s();
  std::vector<double> f64s();
  std::vector<std::uint32_t> u32s();
  std::vector<std::string> strs();

  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  // Throws FormatError if unread bytes remain.
  void expect_end() const;
  const std::string& what() const noexcept { return what_; }

 private:
  std::string_view take(std::size_t n);
  std::size_t count(std::size_t element_size);

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename so readers never see a partial
// file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::uint32_t crc32(std::string_view bytes);

}  // namespace triage::io
