#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwm/nn/graph.hpp"

namespace hwm::nn {

struct AdamWConfig {
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with clip-by-global-norm ahead of the moment update and decoupled
/// weight decay applied after the adaptive step.
class AdamW {
 public:
  AdamW(const ParamStore<float>& params, AdamWConfig cfg);

  const AdamWConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }

  /// Returns false (and leaves params, moments and counter untouched) when a
  /// gradient entry is not finite.
  bool step(ParamStore<float>& params, const std::vector<Tensor<float>>& grads);

  std::uint64_t steps() const noexcept { return step_; }
  double last_grad_norm() const noexcept { return last_norm_; }
  double last_clip_factor() const noexcept { return last_clip_; }
  const std::vector<std::string>& events() const noexcept { return events_; }

  const std::vector<Tensor<float>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<float>>& second_moments() const noexcept { return v_; }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor<float>> m_;
  std::vector<Tensor<float>> v_;
  std::uint64_t step_ = 0;
  double last_norm_ = 0.0;
  double last_clip_ = 1.0;
  std::vector<std::string> events_;
};

double global_grad_norm(const std::vector<Tensor<float>>& grads);

struct LrSchedule {
  double base_lr = 2e-4;
  int warmup_epochs = 0;
  int total_epochs = 1;
};

/// Linear warmup to base over `warmup_epochs`, then cosine decay reaching 0 at
/// the final epoch. Throws std::out_of_range outside [0, total_epochs).
double lr_at(int epoch, const LrSchedule& schedule);

}  // namespace hwm::nn
