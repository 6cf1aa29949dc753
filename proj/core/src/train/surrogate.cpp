#include "hwm/train/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace hwm::train {

nn::Tensor<float> stack(std::span<const env::State> states) {
  if (states.empty()) throw std::invalid_argument("cannot stack an empty batch");
  const auto& shape = states.front().shape();
  nn::Shape out{states.size()};
  out.insert(out.end(), shape.begin(), shape.end());
  nn::Tensor<float> t(out);
  const std::size_t n = states.front().size();
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].shape() != shape) {
      throw nn::ShapeError("batch element " + std::to_string(i) + " has shape " + nn::shape_str(states[i].shape()) +
                           ", expected " + nn::shape_str(shape));
    }
    std::memcpy(t.ptr() + i * n, states[i].ptr(), n * sizeof(float));
  }
  return t;
}

std::vector<env::State> unstack(const nn::Tensor<float>& batch) {
  const nn::Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = nn::shape_numel(shape);
  std::vector<env::State> out;
  out.reserve(batch.dim(0));
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    out.emplace_back(shape, std::vector<float>(batch.ptr() + i * n, batch.ptr() + (i + 1) * n));
  }
  return out;
}

env::State Predictor::predict(const env::State& s, int horizon) {
  const int h[1] = {horizon};
  return std::move(predict(std::span<const env::State>(&s, 1), h).front());
}

NeuralSurrogate::NeuralSurrogate(nn::Network<float> net, data::NormStats norm, std::vector<int> ladder,
                                 bool single_horizon)
    : net_(std::move(net)), norm_(std::move(norm)), ladder_(std::move(ladder)), single_(single_horizon) {
  if (norm_.channels() == 0) throw std::invalid_argument("surrogate needs normalisation statistics");
}

bool NeuralSurrogate::supports(int horizon) const {
  return std::find(ladder_.begin(), ladder_.end(), horizon) != ladder_.end();
}

nn::Tensor<float> NeuralSurrogate::predict_normalized(const nn::Tensor<float>& z, std::span<const int> horizons) {
  ++passes_;
  const std::size_t n = z.dim(0);
  if (horizons.size() != n) throw std::invalid_argument("one horizon per batch row required");
  if (n <= kChunk) return net_.forward(z, horizons);
  nn::Tensor<float> out(z.shape());
  const std::size_t row = z.size() / n;
  for (std::size_t lo = 0; lo < n; lo += kChunk) {
    const std::size_t m = std::min(kChunk, n - lo);
    nn::Shape cs = z.shape();
    cs[0] = m;
    nn::Tensor<float> chunk(cs, std::vector<float>(z.ptr() + lo * row, z.ptr() + (lo + m) * row));
    const auto y = net_.forward(chunk, horizons.subspan(lo, m));
    std::memcpy(out.ptr() + lo * row, y.ptr(), m * row * sizeof(float));
  }
  return out;
}

std::vector<env::State> NeuralSurrogate::predict(std::span<const env::State> states, std::span<const int> horizons) {
  std::vector<env::State> z;
  z.reserve(states.size());
  for (const auto& s : states) z.push_back(norm_.normalize(s));
  const auto zb = stack(z);
  const auto out = predict_normalized(zb, horizons);
  // delta in normalised units, mapped back through the std only.
  nn::Tensor<float> delta(out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) delta[i] = out[i] - zb[i];
  auto deltas = unstack(delta);
  std::vector<env::State> result;
  result.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto d = norm_.scale(deltas[i]);
    env::State r = states[i];
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += d[k];
    result.push_back(std::move(r));
  }
  return result;
}

std::vector<env::State> SolverPredictor::predict(std::span<const env::State> states, std::span<const int> horizons) {
  ++passes_;
  std::vector<env::State> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back(env::advance(params_, states[i], horizons[i], res_));
  return out;
}

std::vector<env::State> IdentityPredictor::predict(std::span<const env::State> states, std::span<const int>) {
  ++passes_;
  return {states.begin(), states.end()};
}

env::EnvParams trajectory_params(const env::Trajectory& t) {
  if (t.frames.empty()) throw std::invalid_argument("trajectory has no frames");
  const std::size_t grid = t.env == env::EnvId::Ball ? 0 : t.frames.front().dim(1);
  return env::params_from_list(t.env, t.params, grid);
}

double rmse(const env::State& a, const env::State& b) {
  if (a.shape() != b.shape()) throw nn::ShapeError("rmse of states with different shapes");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace hwm::train
