#include "hwm/data/io.hpp"

#include <cstring>

namespace hwm::data {

namespace {

struct Dims {
  std::uint32_t c, h, w;
};

Dims dims_of(const env::Trajectory& t) {
  if (t.frames.empty()) throw std::invalid_argument("cannot encode an empty trajectory");
  const auto& s = t.frames.front().shape();
  if (t.env == env::EnvId::Ball) {
    if (s != nn::Shape{9}) throw std::invalid_argument("ball frames must have shape [9]");
    return {9, 1, 1};
  }
  if (s.size() != 3) throw std::invalid_argument("field frames must have shape [C,H,W]");
  return {static_cast<std::uint32_t>(s[0]), static_cast<std::uint32_t>(s[1]), static_cast<std::uint32_t>(s[2])};
}

}  // namespace

std::vector<std::uint8_t> encode_trajectory(const env::Trajectory& t) {
  const Dims d = dims_of(t);
  ByteWriter w;
  w.put_bytes(kTrajectoryMagic, 4);
  w.put(kTrajectoryVersion);
  w.put(static_cast<std::uint8_t>(t.env));
  const std::uint8_t reserved[3] = {0, 0, 0};
  w.put_bytes(reserved, 3);
  w.put(static_cast<std::uint32_t>(t.frames.size()));
  w.put(d.c);
  w.put(d.h);
  w.put(d.w);
  w.put(t.dt);
  w.put(static_cast<std::uint32_t>(t.params.size()));
  for (const auto& [name, value] : t.params) {
    w.put_string16(name);
    w.put(value);
  }
  const std::size_t n = std::size_t{d.c} * d.h * d.w;
  for (const auto& f : t.frames) {
    if (f.size() != n) throw std::invalid_argument("trajectory frames differ in shape");
    w.put_bytes(f.ptr(), n * sizeof(float));
  }
  w.put_crc();
  return w.bytes();
}

env::Trajectory decode_trajectory(std::span<const std::uint8_t> bytes, std::optional<env::EnvId> expect) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || std::memcmp(r.take(4), kTrajectoryMagic, 4) != 0) {
    throw FormatError(FormatErrc::BadMagic, "not a trajectory file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kTrajectoryVersion) {
    throw FormatError(FormatErrc::VersionMismatch, "trajectory format version " + std::to_string(version) +
                                                       ", expected " + std::to_string(kTrajectoryVersion));
  }
  const auto raw_env = r.get<std::uint8_t>();
  r.take(3);
  if (raw_env > 2) throw FormatError(FormatErrc::Malformed, "unknown env id " + std::to_string(raw_env));
  env::Trajectory t;
  t.env = static_cast<env::EnvId>(raw_env);
  if (expect && *expect != t.env) {
    throw FormatError(FormatErrc::EnvMismatch,
                      "file holds a " + env::to_string(t.env) + " trajectory, expected " + env::to_string(*expect));
  }
  const auto frames = r.get<std::uint32_t>();
  const Dims d{r.get<std::uint32_t>(), r.get<std::uint32_t>(), r.get<std::uint32_t>()};
  t.dt = r.get<double>();
  const auto nparams = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nparams; ++i) {
    std::string name = r.get_string16();
    const auto value = r.get<double>();
    t.params.emplace_back(std::move(name), value);
  }
  const nn::Shape shape = t.env == env::EnvId::Ball ? nn::Shape{d.c} : nn::Shape{d.c, d.h, d.w};
  if (t.env == env::EnvId::Ball && (d.h != 1 || d.w != 1)) throw FormatError(FormatErrc::Malformed, "ball H/W != 1");
  const std::size_t n = std::size_t{d.c} * d.h * d.w;
  if (n == 0) throw FormatError(FormatErrc::Malformed, "zero-sized frame");
  // Check the payload fits before allocating.
  if (static_cast<unsigned __int128>(frames) * n * sizeof(float) + 4 > r.remaining()) {
    throw FormatError(FormatErrc::Truncated, "payload shorter than " + std::to_string(frames) + " frames");
  }
  t.frames.reserve(frames);
  for (std::uint32_t i = 0; i < frames; ++i) {
    std::vector<float> buf(n);
    std::memcpy(buf.data(), r.take(n * sizeof(float)), n * sizeof(float));
    t.frames.emplace_back(shape, std::move(buf));
  }
  r.verify_crc();
  return t;
}

std::uint32_t write_trajectory(const env::Trajectory& t, const std::filesystem::path& path) {
  const auto bytes = encode_trajectory(t);
  std::uint32_t crc;
  std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
  write_file_atomic(path, bytes);
  return crc;
}

env::Trajectory read_trajectory(const std::filesystem::path& path, std::optional<env::EnvId> expect) {
  try {
    return decode_trajectory(read_file(path), expect);
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path.string() + ": " + std::string(e.what()).substr(std::strlen(to_string(e.code())) + 2));
  }
}

}  // namespace hwm::data
