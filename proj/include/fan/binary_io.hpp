#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

namespace fan {

// Little-endian encoder used by the FANF and FANP formats.
class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view bytes) { out_.append(bytes); }
  // u16 byte length followed by the bytes; throws SchemaError past 65535.
  void str(std::string_view s);

  const std::string& bytes() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int width) {
    for (int b = 0; b < width; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  std::string out_;
};

// Bounds-checked little-endian decoder. Running off the end throws
// FormatError naming `context`.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint16_t u16(const char* context) { return static_cast<std::uint16_t>(get(2, context)); }
  std::uint32_t u32(const char* context) { return static_cast<std::uint32_t>(get(4, context)); }
  std::uint64_t u64(const char* context) { return get(8, context); }
  float f32(const char* context) { return std::bit_cast<float>(u32(context)); }
  double f64(const char* context) { return std::bit_cast<double>(u64(context)); }
  std::string_view raw(std::size_t n, const char* context);
  std::string str(const char* context);

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::uint64_t get(int width, const char* context);
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path);

// Writes to a sibling temporary file and renames it into place, so a failed
// write never leaves a partial file at `path`.
void write_file_bytes(const std::string& path, std::string_view bytes);

}  // namespace fan
