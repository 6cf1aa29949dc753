#pragma once

#include <span>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/env/env.hpp"
#include "hwm/nn/network.hpp"

namespace hwm::train {

/// [N, ...shape] from N states of equal shape, and back.
nn::Tensor<float> stack(std::span<const env::State> states);
std::vector<env::State> unstack(const nn::Tensor<float>& batch);

/// Anything that maps (state, horizon) to a predicted future state, in raw
/// (physical) units. Scoring and deployment only talk to this interface.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::vector<env::State> predict(std::span<const env::State> states, std::span<const int> horizons) = 0;
  env::State predict(const env::State& s, int horizon);

  virtual bool supports(int horizon) const = 0;
  /// Trained at a single horizon, so the step-doubling probe is undefined.
  virtual bool single_horizon() const { return false; }

  /// Number of predict calls so far; a batched call counts once.
  std::size_t passes() const noexcept { return passes_; }
  void reset_passes() noexcept { passes_ = 0; }

 protected:
  std::size_t passes_ = 0;
};

/// Network plus normalisation: predict(s, T) = s + std * delta(norm(s), T),
/// which is denorm(f(norm(s), T)) without the mean round trip.
class NeuralSurrogate : public Predictor {
 public:
  NeuralSurrogate(nn::Network<float> net, data::NormStats norm, std::vector<int> ladder, bool single_horizon = false);

  using Predictor::predict;
  std::vector<env::State> predict(std::span<const env::State> states, std::span<const int> horizons) override;
  /// Network output in normalised space; counts as a pass.
  nn::Tensor<float> predict_normalized(const nn::Tensor<float>& z, std::span<const int> horizons);

  bool supports(int horizon) const override;
  bool single_horizon() const override { return single_; }

  nn::Network<float>& network() noexcept { return net_; }
  const data::NormStats& norm() const noexcept { return norm_; }
  const std::vector<int>& ladder() const noexcept { return ladder_; }

  /// Largest batch pushed through the network at once.
  static constexpr std::size_t kChunk = 32;

 private:
  nn::Network<float> net_;
  data::NormStats norm_;
  std::vector<int> ladder_;
  bool single_;
};

/// The reference solver behind the predictor interface. Answers any T >= 1.
class SolverPredictor : public Predictor {
 public:
  explicit SolverPredictor(env::EnvParams params, env::Resolution res = env::Resolution::Standard)
      : params_(std::move(params)), res_(res) {}

  using Predictor::predict;
  std::vector<env::State> predict(std::span<const env::State> states, std::span<const int> horizons) override;
  bool supports(int horizon) const override { return horizon >= 1; }

 private:
  env::EnvParams params_;
  env::Resolution res_;
};

/// f(s, T) = s.
class IdentityPredictor : public Predictor {
 public:
  using Predictor::predict;
  std::vector<env::State> predict(std::span<const env::State> states, std::span<const int> horizons) override;
  bool supports(int horizon) const override { return horizon >= 1; }
};

/// Solver parameters for a stored trajectory (its header list plus the grid implied by its frames).
env::EnvParams trajectory_params(const env::Trajectory& t);

/// Root-mean-square difference over all elements.
double rmse(const env::State& a, const env::State& b);

}  // namespace hwm::train
