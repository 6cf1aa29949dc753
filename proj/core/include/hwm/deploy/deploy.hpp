#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/train/surrogate.hpp"

namespace hwm::deploy {

/// Nearest-rank q-quantile of validation scores; q = 0 gives -inf (defer all).
double calibrate_tau(const std::vector<double>& val_scores, double q);

struct GateConfig {
  double q = 0.75;
  double tau = 0.0;
  data::Split calibration = data::Split::Val;
  int horizon = 0;
};

/// Refuses scores from any split other than val.
GateConfig calibrate_gate(const std::vector<double>& val_scores, data::Split scores_split, double q, int horizon);

/// One state per trajectory at its fixed evaluation start, with ground truth
/// and the trajectory's own solver parameters.
struct DeployBatch {
  data::Split split = data::Split::Test;
  int horizon = 0;
  std::vector<std::uint64_t> traj_id;
  std::vector<env::State> s0;
  std::vector<env::State> truth;
  std::vector<env::EnvParams> solver;

  std::size_t size() const noexcept { return s0.size(); }
};

DeployBatch make_batch(const data::SplitData& split, int T, std::uint64_t base_seed);

enum class Source { Surrogate, Solver, Failed };
std::string to_string(Source s);

struct DeploymentRow {
  std::uint64_t traj_id = 0;
  data::Split split = data::Split::Test;
  int horizon = 0;
  std::optional<double> score;
  std::optional<double> tau;
  bool kept = true;
  double rmse_mode1 = 0.0;
  /// Empty for failed deferrals.
  std::optional<double> rmse_mode2;
  Source source = Source::Surrogate;
  double solver_seconds = 0.0;
  double surrogate_seconds = 0.0;
};

struct DeploymentResult {
  std::vector<DeploymentRow> rows;
  std::vector<env::State> mode1;
  /// Failed deferrals hold the surrogate prediction here but are excluded from aggregates.
  std::vector<env::State> mode2;
  std::size_t kept = 0, deferred = 0, failed = 0;
  /// Means over trajectories that did not fail.
  double rmse_mode1 = 0.0;
  double rmse_mode2 = 0.0;
  double mode1_seconds = 0.0;
  double mode2_seconds = 0.0;

  double deferral_fraction() const noexcept;
  /// 1 - rmse_mode2 / rmse_mode1.
  double reduction() const noexcept;
};

/// Surrogate alone: one batched forward pass.
DeploymentResult run_mode1(train::Predictor& model, const DeployBatch& batch);

/// Keeps trajectory i iff scores[i] <= tau; the rest are run by the reference
/// solver. Output order follows the batch.
DeploymentResult run_mode2(train::Predictor& model, const DeployBatch& batch, const std::vector<double>& scores,
                           const GateConfig& gate);

/// Expected relative RMSE reduction of random deferral at keep fraction q.
double random_floor(double q);

struct RandomDeferral {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> reductions;
};

/// Defers each trajectory independently with probability 1 - q; the deferred
/// error is zero.
RandomDeferral random_deferral(const std::vector<double>& rmse_mode1, double q, int resamples, std::uint64_t seed);

struct QSweepRow {
  double q = 0.0;
  double tau = 0.0;
  double reduction = 0.0;
  double floor = 0.0;
  double deferral_fraction = 0.0;
  double random_mean = 0.0;
};

/// One calibrate + Mode 2 run per q (ascending, each in [0, 1]).
std::vector<QSweepRow> q_sweep(train::Predictor& model, const DeployBatch& batch, const std::vector<double>& scores,
                               const std::vector<double>& val_scores, const std::vector<double>& qs, int resamples,
                               std::uint64_t seed);

void write_deployment_csv(const std::filesystem::path& path, const std::vector<DeploymentRow>& rows);
void write_q_sweep_csv(const std::filesystem::path& path, const std::vector<QSweepRow>& rows);

}  // namespace hwm::deploy
