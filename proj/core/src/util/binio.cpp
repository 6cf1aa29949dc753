#include "hwm/util/binio.hpp"

#include <zlib.h>

#include <fstream>
#include <limits>

namespace hwm {

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::BadMagic:
      return "bad magic";
    case FormatErrc::VersionMismatch:
      return "version mismatch";
    case FormatErrc::Truncated:
      return "truncated";
    case FormatErrc::ChecksumMismatch:
      return "checksum mismatch";
    case FormatErrc::EnvMismatch:
      return "environment mismatch";
    case FormatErrc::Io:
      return "i/o error";
    case FormatErrc::Malformed:
      return "malformed";
  }
  return "unknown";
}

FormatError::FormatError(FormatErrc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, std::numeric_limits<uInt>::max()));
    crc = ::crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::put_string16(const std::string& s) {
  if (s.size() > 0xffff) throw std::length_error("string too long for a u16 length prefix");
  put(static_cast<std::uint16_t>(s.size()));
  put_bytes(s.data(), s.size());
}

void ByteWriter::put_string32(const std::string& s) {
  put(static_cast<std::uint32_t>(s.size()));
  put_bytes(s.data(), s.size());
}

const std::uint8_t* ByteReader::take(std::size_t n) {
  if (n > remaining()) {
    throw FormatError(FormatErrc::Truncated, "needed " + std::to_string(n) + " bytes at offset " +
                                                 std::to_string(pos_) + ", " + std::to_string(remaining()) +
                                                 " left");
  }
  const std::uint8_t* p = bytes_.data() + pos_;
  pos_ += n;
  return p;
}

std::string ByteReader::get_string16() {
  const auto n = get<std::uint16_t>();
  const auto* p = take(n);
  return {reinterpret_cast<const char*>(p), n};
}

std::string ByteReader::get_string32() {
  const auto n = get<std::uint32_t>();
  const auto* p = take(n);
  return {reinterpret_cast<const char*>(p), n};
}

void ByteReader::verify_crc() {
  const std::size_t body = pos_;
  const auto stored = get<std::uint32_t>();
  const std::uint32_t actual = crc32(bytes_.first(body));
  if (stored != actual) throw FormatError(FormatErrc::ChecksumMismatch, "stored CRC does not match the content");
  if (remaining() != 0) throw FormatError(FormatErrc::Malformed, std::to_string(remaining()) + " trailing bytes");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> buf(size);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError(FormatErrc::Io, "short read on " + path.string());
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrc::Io, "short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace hwm
