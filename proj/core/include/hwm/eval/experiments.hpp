#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/eval/metrics.hpp"
#include "hwm/train/surrogate.hpp"

namespace hwm::eval {

struct ClosedLoopPoint {
  int k = 0;
  /// Mean over trajectories of the raw-space RMSE after k chained steps.
  double rmse = 0.0;
  std::size_t n = 0;
};

/// Chains the model k times at horizon h from each trajectory's evaluation
/// start for k * h = max(ks) * h, scoring against the stored rollout.
std::vector<ClosedLoopPoint> closed_loop(train::Predictor& model, const data::SplitData& split, int h,
                                         const std::vector<int>& ks, std::uint64_t base_seed);

void write_closed_loop_csv(const std::filesystem::path& path, const std::string& env, int h,
                           const std::vector<ClosedLoopPoint>& points);

/// Step-doubling cells at horizons past the ladder; T/2 may also lie outside.
/// Each horizon must be even and shorter than the trajectories.
std::vector<EvalCell> beyond_tmax(train::NeuralSurrogate& model, const data::SplitData& split,
                                  const std::vector<int>& horizons, std::uint64_t base_seed, const CellOptions& opts);

/// {T_max, 1.5 T_max, 2 T_max}, each rounded to even.
std::vector<int> extrapolated_horizons(int t_max);

}  // namespace hwm::eval
