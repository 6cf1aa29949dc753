#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/nn/network.hpp"
#include "hwm/nn/optim.hpp"
#include "hwm/train/checkpoint.hpp"
#include "hwm/train/surrogate.hpp"

namespace hwm::train {

enum class LossMode { Supervised, SelfConsistency };

std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& name);

struct TrainConfig {
  env::EnvId env = env::EnvId::Ball;
  nn::Architecture arch;
  std::vector<int> ladder{1, 2, 4, 8, 16, 32, 64};
  std::size_t batch = 8;
  std::size_t samples_per_epoch = 2000;
  int epochs = 40;
  nn::AdamWConfig opt;
  int warmup_epochs = 0;
  /// Fraction of each batch replaced by on-policy pairs.
  double dagger_lambda = 0.1;
  /// First (0-based) epoch with on-policy pairs; the first epoch stays supervised.
  int dagger_start_epoch = 1;
  int patience = 15;
  std::uint64_t seed = 0;
  LossMode mode = LossMode::Supervised;
};

/// Throws std::invalid_argument. `data_ladder` is the ladder the dataset was built for.
void validate(const TrainConfig& cfg, const std::vector<int>& data_ladder);

/// Hex digest of every field; equal configs hash equal.
std::string config_hash(const TrainConfig& cfg);

/// Backbone by state shape: FiLM-MLP for the ball, U-Net for fields.
nn::Architecture default_architecture(env::EnvId env, std::size_t grid);

/// Full-scale values from the hyperparameter table.
TrainConfig paper_train_config(env::EnvId env, std::size_t grid);
/// Reduced budgets that run on one laptop core.
TrainConfig desk_train_config(env::EnvId env, std::size_t grid);
/// Desk budget for the self-consistency-only ablation (no DAgger).
TrainConfig desk_self_consistency_config(env::EnvId env, std::size_t grid);

/// Fixed evaluation pairs: one per (trajectory, horizon) at eval_start.
struct PairSet {
  std::vector<env::State> s0;
  std::vector<env::State> sT;
  std::vector<int> T;
  std::vector<std::size_t> traj;
  std::vector<std::size_t> start;

  std::size_t size() const noexcept { return T.size(); }
};

PairSet fixed_pairs(const data::SplitData& split, const std::vector<int>& horizons, std::uint64_t base_seed);

/// Mean squared error in normalised space, averaged per horizon and then
/// uniformly across horizons.
double normalized_mse(Predictor& model, const PairSet& pairs, const data::NormStats& norm);
/// Same with prediction = input.
double identity_mse(const PairSet& pairs, const data::NormStats& norm);
/// Held-out self-consistency loss: mean over pairs (T >= 2 with T/2 supported)
/// of the element-mean squared gap between f(s,T) and f(f(s,T/2),T/2).
double self_consistency_loss(NeuralSurrogate& model, const PairSet& pairs);
/// Mean over pairs of the RMS of f(s,T) - s in normalised space.
double identity_probe(NeuralSurrogate& model, const PairSet& pairs);

/// Per-element Bernoulli(lambda) mask.
std::vector<char> dagger_mask(std::size_t batch, double lambda, Rng& rng);

struct TrainBatch {
  std::vector<env::State> input;
  std::vector<env::State> target;
  std::vector<int> T;
  std::vector<char> on_policy;
};

struct DaggerStats {
  std::size_t on_policy = 0;
  std::size_t aborts = 0;
};

/// Replaces masked elements with on-policy pairs: input = model(s0, T1) for a
/// fresh supervised pair, target = reference solver advanced from that input
/// by a fresh ladder horizon T2. A solver abort keeps the supervised element.
void dagger_augment(NeuralSurrogate& model, const std::vector<env::Trajectory>& trajs,
                    const data::PairSampler& sampler, TrainBatch& batch, const std::vector<char>& mask, Rng& rng,
                    DaggerStats& stats);

struct EpochLog {
  int epoch = 0;
  std::optional<double> train_loss;
  std::optional<double> val_mse;
  std::optional<double> lr;
  std::optional<double> sc_loss;
  std::optional<double> identity_probe;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  /// Row 0 is the untrained network.
  std::vector<EpochLog> curve;
  double identity_val_mse = 0.0;
  DaggerStats dagger;
  bool early_stopped = false;
  bool diverged = false;
  std::string message;
};

using ProgressFn = std::function<void(const EpochLog&)>;

/// Runs the configured loss mode. On a non-finite loss or gradient the run
/// stops with `diverged` set and `best` holding the last good checkpoint.
TrainResult train(const TrainConfig& cfg, const data::SplitData& train_split, const data::SplitData& val_split,
                  const data::NormStats& norm, const ProgressFn& progress = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& curve);

}  // namespace hwm::train
