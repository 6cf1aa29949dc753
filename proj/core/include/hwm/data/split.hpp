#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hwm/env/env.hpp"

namespace hwm::data {

enum class Split { Train, Val, Test, OodNear, OodFar };
inline constexpr std::array<Split, 5> kAllSplits{Split::Train, Split::Val, Split::Test, Split::OodNear,
                                                  Split::OodFar};

std::string to_string(Split s);
Split split_from_string(const std::string& name);
bool is_ood(Split s);

struct Interval {
  double lo, hi;
};

/// Union of closed intervals. Sampling picks an interval with probability
/// proportional to its length, then draws uniformly inside it.
struct Band {
  std::vector<Interval> parts;

  double sample(Rng& rng) const;
  bool contains(double x) const;
  /// Throws std::invalid_argument for empty, reversed or non-finite parts.
  void validate(const std::string& name) const;
};

using BandSet = std::map<std::string, Band>;

/// Per-split parameter sampling bands.
BandSet default_bands(env::EnvId env, Split split);

/// Everything needed to generate one split of one environment.
struct SplitSpec {
  env::EnvId env = env::EnvId::Ball;
  Split split = Split::Train;
  std::size_t count = 0;
  /// Trajectory seeds are seed_first, ..., seed_first + count - 1.
  std::uint64_t seed_first = 0;
  std::uint64_t base_seed = 0;
  int frames = 2;
  env::EnvParams solver;
  BandSet bands;
  /// In-distribution bands, used by OOD sub-modes that shift one parameter only.
  BandSet id_bands;
  /// Half-width of the quadrant interface jitter (Euler OOD-far).
  double quadrant_jitter = 0.0;
};

/// Seed ranges are spaced this far apart, so counts must stay below it.
inline constexpr std::uint64_t kSeedStride = 1'000'000;

void validate(const SplitSpec& spec);
/// Throws if any two specs share a trajectory seed.
void check_disjoint(const std::vector<SplitSpec>& specs);

/// Per-environment data settings (desk or paper scale).
struct EnvDataConfig {
  env::EnvId env = env::EnvId::Ball;
  env::EnvParams solver;
  int frames = 101;
  std::map<Split, std::size_t> counts;
  std::vector<int> ladder;
  std::uint64_t seed = 0;
};

EnvDataConfig desk_config(env::EnvId env);
EnvDataConfig paper_config(env::EnvId env);
SplitSpec split_spec(const EnvDataConfig& cfg, Split split);

/// One trajectory's solver parameters, initial condition and the named values
/// recorded in its file header.
struct TrajectorySpec {
  env::EnvParams params;
  env::InitialCondition ic;
  std::uint64_t seed = 0;
  std::uint64_t ic_seed = 0;
  env::ParamList record;
};

/// Deterministic in (spec, index).
TrajectorySpec sample_params(const SplitSpec& spec, std::size_t index);

/// Generates the trajectory described by a TrajectorySpec.
env::Trajectory generate_trajectory(const TrajectorySpec& ts, int frames);

/// Positive, strictly increasing horizons.
void validate_ladder(const std::vector<int>& ladder);
/// Every horizon above the smallest has its half in the ladder.
bool doubling_closed(const std::vector<int>& ladder);

}  // namespace hwm::data
