#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hwm/env/env.hpp"
#include "hwm/train/surrogate.hpp"

namespace hwm::eval {

struct BenchRecord {
  std::string env;
  int horizon = 0;
  /// "single" for one state, "batch<N>" otherwise.
  std::string batch_mode;
  double surrogate_seconds = 0.0;
  double solver_seconds = 0.0;
  double speedup = 0.0;
  int threads = 0;
  int repeats = 0;
  /// A measurement was below the timer floor and was re-run in a loop.
  bool escalated = false;
};

struct BenchOptions {
  int repeats = 5;
  int warmup = 1;
  /// Recorded; both sides run in this process on the calling thread.
  int threads = 1;
  /// Shortest single measurement trusted without looping.
  double min_seconds = 1e-4;
};

/// Median seconds per call over `repeats` timed calls after `warmup`
/// discarded ones. Calls shorter than min_seconds are looped (doubling the
/// inner count) and `escalated` is set.
double median_seconds(const std::function<void()>& fn, const BenchOptions& opts, bool& escalated);

/// Times the surrogate and the reference solver on the same states (one per
/// batch element) for each horizon.
std::vector<BenchRecord> bench_walltime(train::Predictor& model, const env::EnvParams& solver,
                                        const std::vector<env::State>& states, const std::vector<int>& horizons,
                                        const BenchOptions& opts);

/// Throws std::invalid_argument when a record lacks its thread or repeat count.
void validate(const BenchRecord& r);

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_bench_csv(const std::filesystem::path& path);

}  // namespace hwm::eval
