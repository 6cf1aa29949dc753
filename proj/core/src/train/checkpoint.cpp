#include "hwm/train/checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "arch_json.hpp"
#include "hwm/util/binio.hpp"

namespace hwm::train {

using nlohmann::json;

using detail::arch_from_json;
using detail::arch_json;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  if (c.norm.mean.size() != c.norm.std.size()) throw std::invalid_argument("norm stats mean/std length differ");
  const json desc{{"arch", arch_json(c.arch)},
                  {"env", env::to_string(c.env)},
                  {"ladder", c.ladder},
                  {"single_horizon", c.single_horizon},
                  {"config_hash", c.config_hash},
                  {"best_val_mse", c.best_val_mse},
                  {"best_epoch", c.best_epoch}};
  ByteWriter w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  w.put_string32(desc.dump());
  w.put(static_cast<std::uint32_t>(c.norm.channels()));
  for (double m : c.norm.mean) w.put(m);
  for (double s : c.norm.std) w.put(s);
  w.put(static_cast<std::uint64_t>(c.weights.size()));
  w.put_bytes(c.weights.data(), c.weights.size() * sizeof(float));
  w.put_crc();
  return w.bytes();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::optional<env::EnvId> expect) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || std::memcmp(r.take(4), kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatErrc::BadMagic, "not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrc::VersionMismatch, "checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  try {
    const json desc = json::parse(r.get_string32());
    c.arch = arch_from_json(desc.at("arch"));
    c.env = env::env_from_string(desc.at("env").get<std::string>());
    c.ladder = desc.at("ladder").get<std::vector<int>>();
    c.single_horizon = desc.at("single_horizon").get<bool>();
    c.config_hash = desc.at("config_hash").get<std::string>();
    c.best_val_mse = desc.at("best_val_mse").get<double>();
    c.best_epoch = desc.at("best_epoch").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(FormatErrc::Malformed, std::string("checkpoint descriptor: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrc::Malformed, std::string("checkpoint descriptor: ") + e.what());
  }
  if (expect && *expect != c.env) {
    throw FormatError(FormatErrc::EnvMismatch,
                      "checkpoint is for " + env::to_string(c.env) + ", expected " + env::to_string(*expect));
  }
  const auto channels = r.get<std::uint32_t>();
  c.norm.mean.resize(channels);
  c.norm.std.resize(channels);
  for (auto& m : c.norm.mean) m = r.get<double>();
  for (auto& s : c.norm.std) s = r.get<double>();
  const auto n = r.get<std::uint64_t>();
  if (n * sizeof(float) + 4 > r.remaining()) throw FormatError(FormatErrc::Truncated, "weights cut short");
  c.weights.resize(n);
  std::memcpy(c.weights.data(), r.take(n * sizeof(float)), n * sizeof(float));
  r.verify_crc();
  return c;
}

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint read_checkpoint(const std::filesystem::path& path, std::optional<env::EnvId> expect) {
  return decode_checkpoint(read_file(path), expect);
}

nn::Network<float> make_network(const Checkpoint& c) {
  nn::Network<float> net(c.arch, 0);
  if (net.params().numel() != c.weights.size()) {
    throw std::invalid_argument("checkpoint holds " + std::to_string(c.weights.size()) +
                                " weights, architecture needs " + std::to_string(net.params().numel()));
  }
  net.params().assign(c.weights);
  return net;
}

NeuralSurrogate make_surrogate(const Checkpoint& c) {
  return NeuralSurrogate(make_network(c), c.norm, c.ladder, c.single_horizon);
}

}  // namespace hwm::train
