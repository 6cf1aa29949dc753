#include "hwm/nn/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hwm::nn {

AdamW::AdamW(const ParamStore<float>& params, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& e : params) {
    m_.emplace_back(e.value.shape());
    v_.emplace_back(e.value.shape());
  }
}

double global_grad_norm(const std::vector<Tensor<float>>& grads) {
  double acc = 0.0;
  for (const auto& g : grads)
    for (float v : g.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

bool AdamW::step(ParamStore<float>& params, const std::vector<Tensor<float>>& grads) {
  if (grads.size() != params.size()) throw ShapeError("optimizer got gradients for a different parameter set");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.tensor(i).shape()) {
      throw ShapeError("gradient shape " + shape_str(grads[i].shape()) + " does not match parameter " +
                       params[i].name + " " + shape_str(params.tensor(i).shape()));
    }
  }
  const double norm = global_grad_norm(grads);
  last_norm_ = norm;
  if (!std::isfinite(norm)) {
    events_.push_back("skipped step " + std::to_string(step_ + 1) + ": non-finite gradient");
    return false;
  }
  last_clip_ = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++step_;

  const float clip = static_cast<float>(last_clip_);
  const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const float bc1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, static_cast<double>(step_)));
  const float bc2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, static_cast<double>(step_)));
  const float lr = static_cast<float>(cfg_.lr);
  const float eps = static_cast<float>(cfg_.eps);
  const float decay = 1.0f - static_cast<float>(cfg_.lr * cfg_.weight_decay);

  for (std::size_t i = 0; i < grads.size(); ++i) {
    float* p = params.tensor(i).ptr();
    float* m = m_[i].ptr();
    float* v = v_[i].ptr();
    const float* g = grads[i].ptr();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      const float gk = g[k] * clip;
      m[k] = b1 * m[k] + (1.0f - b1) * gk;
      v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
      const float mhat = m[k] / bc1;
      const float vhat = v[k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
      p[k] *= decay;
    }
  }
  return true;
}

double lr_at(int epoch, const LrSchedule& s) {
  if (s.total_epochs < 1 || s.warmup_epochs < 0 || s.warmup_epochs >= s.total_epochs) {
    throw std::invalid_argument("lr schedule needs 0 <= warmup < total epochs");
  }
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.total_epochs) + ")");
  }
  if (epoch < s.warmup_epochs) {
    return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs + 1);
  }
  const int span = s.total_epochs - 1 - s.warmup_epochs;
  if (span == 0) return s.base_lr;
  const double progress = static_cast<double>(epoch - s.warmup_epochs) / static_cast<double>(span);
  return 0.5 * s.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace hwm::nn
