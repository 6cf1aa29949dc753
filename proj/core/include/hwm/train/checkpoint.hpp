#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/nn/network.hpp"
#include "hwm/train/surrogate.hpp"

namespace hwm::train {

inline constexpr char kCheckpointMagic[4] = {'H', 'W', 'M', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Self-contained surrogate: architecture, weights and the train-split normalisation.
struct Checkpoint {
  nn::Architecture arch;
  env::EnvId env = env::EnvId::Ball;
  std::vector<int> ladder;
  bool single_horizon = false;
  std::string config_hash;
  double best_val_mse = 0.0;
  int best_epoch = 0;
  data::NormStats norm;
  std::vector<float> weights;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::optional<env::EnvId> expect = std::nullopt);
void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path, std::optional<env::EnvId> expect = std::nullopt);

/// Throws std::invalid_argument if the weight count does not match the architecture.
nn::Network<float> make_network(const Checkpoint& c);
NeuralSurrogate make_surrogate(const Checkpoint& c);

}  // namespace hwm::train
