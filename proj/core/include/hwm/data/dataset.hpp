#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hwm/data/split.hpp"
#include "hwm/env/env.hpp"

namespace hwm::data {

struct ManifestEntry {
  std::string file;
  std::uint64_t seed = 0;
  env::ParamList params;
  bool ok = false;
  std::uint32_t crc = 0;
  std::string error;
};

struct Manifest {
  env::EnvId env = env::EnvId::Ball;
  Split split = Split::Train;
  std::uint64_t base_seed = 0;
  int frames = 0;
  std::vector<ManifestEntry> entries;

  std::string to_json() const;
  static Manifest from_json(const std::string& text);
};

inline constexpr const char* kManifestName = "manifest.json";

struct GenerateReport {
  std::size_t generated = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Writes one file per trajectory plus manifest.json into `dir`. Existing
/// files that decode cleanly and carry the expected parameters are kept, so a
/// rerun recomputes nothing. A solver abort marks the entry failed and the
/// remaining trajectories still run.
GenerateReport generate_split(const SplitSpec& spec, const std::filesystem::path& dir, unsigned threads = 1);

/// Generates every split of `cfg` under root/<split>/ after checking seeds are disjoint.
std::vector<GenerateReport> generate_dataset(const EnvDataConfig& cfg, const std::filesystem::path& root,
                                             unsigned threads = 1);

struct SplitData {
  env::EnvId env = env::EnvId::Ball;
  Split split = Split::Train;
  std::vector<env::Trajectory> trajectories;
  std::vector<std::uint64_t> seeds;

  std::size_t size() const noexcept { return trajectories.size(); }
};

/// Loads the entries the manifest marks ok, verifying each file's CRC against it.
SplitData load_split(const std::filesystem::path& dir, env::EnvId expect);

/// Generates a split in memory without touching disk.
SplitData generate_in_memory(const SplitSpec& spec, unsigned threads = 1);

struct HorizonSample {
  env::State s0;
  env::State sT;
  int T = 0;
  std::size_t traj = 0;
  std::size_t start = 0;
};

/// Where a pair lives; cheaper than HorizonSample when the frames are not needed yet.
struct PairIndex {
  std::size_t traj = 0;
  std::size_t start = 0;
  int T = 0;
};

/// Draws T uniformly from the ladder, then the start uniformly from the
/// starts with start + T < length.
class PairSampler {
 public:
  /// Throws std::invalid_argument if the ladder is malformed or any horizon
  /// does not fit in the shortest trajectory.
  PairSampler(const std::vector<env::Trajectory>& trajs, std::vector<int> ladder);

  PairIndex draw(Rng& rng) const;
  HorizonSample sample(Rng& rng) const;
  HorizonSample at(const PairIndex& idx) const;

  const std::vector<int>& ladder() const noexcept { return ladder_; }

 private:
  const std::vector<env::Trajectory>* trajs_;
  std::vector<int> ladder_;
};

/// Pairs from a single trajectory.
std::vector<HorizonSample> extract_pairs(const env::Trajectory& t, const std::vector<int>& ladder, Rng& rng,
                                         std::size_t count);

/// Fixed evaluation start for (trajectory, horizon): deterministic, uniform
/// over the legal starts.
std::size_t eval_start(std::uint64_t base_seed, std::uint64_t traj_seed, int horizon, std::size_t length);

/// Per-channel statistics. Ball states count each of the 9 components as a channel.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::string> warnings;

  std::size_t channels() const noexcept { return mean.size(); }
  env::State normalize(const env::State& s) const;
  env::State denormalize(const env::State& z) const;
  /// Multiplies by std only (for residuals and error scales).
  env::State scale(const env::State& z) const;

  friend bool operator==(const NormStats& a, const NormStats& b) { return a.mean == b.mean && a.std == b.std; }
};

inline constexpr double kStdFloor = 1e-6;

/// Refuses anything but the train split. Two-pass, accumulated in double over every frame.
NormStats compute_norm_stats(const SplitData& train);

/// Channel count and per-channel plane size of a state.
std::size_t state_channels(const env::State& s);

}  // namespace hwm::data
