#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/nn/graph.hpp"
#include "hwm/train/surrogate.hpp"
#include "hwm/trust/step_doubling.hpp"

namespace hwm::trust {

/// Mean over cells of the across-member std (channel norm per cell) of the
/// members' normalised predictions. One predictor call per member.
std::vector<double> ensemble_scores(std::span<train::Predictor* const> members, const data::NormStats& norm,
                                    std::span<const env::State> states, int T);

struct TtaOptions {
  int replicas = 8;
  /// Noise std in normalised units.
  double sigma = 0.01;
};

/// Spread of predictions over noisy copies of the input, measured like the
/// ensemble score. Deterministic given the rng state.
double tta_score(train::Predictor& model, const data::NormStats& norm, const env::State& s, int T,
                 const TtaOptions& opts, Rng& rng);

/// Mean over cells of sum over channels of |central-difference gradient| of
/// the normalised field (edges use the clamped neighbour).
double grad_mag_score(const env::State& s, const data::NormStats& norm);

/// Pooled statistics of a normalised state: per channel mean, std, mean
/// absolute gradient (fields only) and max abs.
std::vector<double> pooled_features(const env::State& s, const data::NormStats& norm);

/// Two-layer MLP on pooled features and the horizon embedding, regressing
/// log(1 + true RMSE) of a frozen surrogate.
class ErrorHead {
 public:
  struct Options {
    std::size_t hidden = 64;
    int epochs = 300;
    double lr = 3e-3;
    std::uint64_t seed = 0;
  };

  /// `states`, `horizons` and `rmse` describe train-split pairs.
  void fit(const std::vector<env::State>& states, const std::vector<int>& horizons, const std::vector<double>& rmse,
           const data::NormStats& norm, const Options& opts);
  /// Predicted log(1 + RMSE). Throws std::logic_error before fit.
  double score(const env::State& s, int T) const;
  bool trained() const noexcept { return params_.size() > 0; }
  double final_loss() const noexcept { return final_loss_; }

 private:
  nn::Tensor<float> inputs(const std::vector<std::vector<double>>& feats, std::span<const int> horizons) const;
  nn::Var<float> forward(nn::Graph<float>& g, nn::ParamStore<float>& params, nn::Var<float> x) const;

  mutable nn::ParamStore<float> params_;
  data::NormStats norm_;
  std::vector<double> feat_mean_, feat_std_;
  double final_loss_ = 0.0;
};

/// Fits the head on train-split pairs of a frozen surrogate. Refuses other splits.
ErrorHead train_error_head(train::Predictor& model, const data::SplitData& train_split, const std::vector<int>& horizons,
                           const data::NormStats& norm, std::uint64_t base_seed, const ErrorHead::Options& opts);

/// Locally adaptive difficulty: mean true RMSE of the k nearest calibration
/// points in standardised (pooled features, log2 T) space.
class ConformalScorer {
 public:
  ConformalScorer(std::vector<std::vector<double>> features, std::vector<double> rmse, std::size_t k = 10);
  double score(const std::vector<double>& query) const;
  std::size_t k() const noexcept { return k_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  static std::vector<double> features(const env::State& s, int T, const data::NormStats& norm);

 private:
  std::vector<std::vector<double>> feats_;
  std::vector<double> rmse_;
  std::vector<double> mean_, std_;
  std::size_t k_;
  std::vector<std::string> warnings_;
};

/// Calibrates on val-split pairs of the surrogate. Refuses other splits.
ConformalScorer calibrate_conformal(train::Predictor& model, const data::SplitData& val_split,
                                    const std::vector<int>& horizons, const data::NormStats& norm,
                                    std::uint64_t base_seed, std::size_t k = 10);

/// Ball only: |E(pred) - E(s0)| with E = |v|^2 / 2 + |g| z, unit mass.
double energy_residual(const env::State& s0, const env::State& pred, double gravity);
/// Ball only: |v(pred) - v(s0)|.
double momentum_residual(const env::State& s0, const env::State& pred);

enum class RichardsonVariant { Fix, Prod };

struct RichardsonResult {
  ErrorMap map;
  double cost_seconds = 0.0;
};

/// Solver order used by the fixed-order correction: 1 for the HLL and ball
/// frame maps, 2 for the Strang-split Oregonator.
int solver_order(env::EnvId env);

/// Two solver legs (standard and halved internal step) from s over T frames.
/// Fix: |yA - yB| / (2^p - 1). Prod: |yA - g| with g the per-element signed
/// geometric mean of the legs (arithmetic mean where their signs differ).
/// Scored in normalised space like the error map.
RichardsonResult richardson_score(const env::EnvParams& solver, const env::State& s, int T, RichardsonVariant v,
                                  const data::NormStats& norm, std::optional<int> order = std::nullopt);

}  // namespace hwm::trust
