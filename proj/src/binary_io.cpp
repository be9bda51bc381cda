#include "fan/binary_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fan/errors.hpp"

namespace fan {

void ByteWriter::str(std::string_view s) {
  if (s.size() > 0xffff) throw SchemaError("string longer than 65535 bytes cannot be encoded");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

std::uint64_t ByteReader::get(int width, const char* context) {
  if (remaining() < static_cast<std::size_t>(width)) {
    throw FormatError(std::string("truncated input while reading ") + context);
  }
  std::uint64_t v = 0;
  for (int b = 0; b < width; ++b) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
  }
  pos_ += width;
  return v;
}

std::string_view ByteReader::raw(std::size_t n, const char* context) {
  if (remaining() < n) throw FormatError(std::string("truncated input while reading ") + context);
  auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str(const char* context) {
  const std::uint16_t len = u16(context);
  return std::string(raw(len, context));
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error while reading '" + path + "'");
  return std::move(buf).str();
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("error while writing '" + path + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

}  // namespace fan
