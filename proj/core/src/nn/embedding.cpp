#include "hwm/nn/embedding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hwm::nn {

double horizon_frequency(std::size_t k) {
  constexpr double lo = 0.05, hi = 20.0;
  constexpr std::size_t pairs = kHorizonEmbedDim / 2;
  return lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(pairs - 1));
}

template <class T>
Tensor<T> horizon_embed(int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1, got " + std::to_string(horizon));
  constexpr std::size_t pairs = kHorizonEmbedDim / 2;
  const double x = std::log2(static_cast<double>(horizon));
  Tensor<T> out({kHorizonEmbedDim});
  for (std::size_t k = 0; k < pairs; ++k) {
    const double phase = horizon_frequency(k) * x;
    out[k] = static_cast<T>(std::cos(phase));
    out[pairs + k] = static_cast<T>(std::sin(phase));
  }
  return out;
}

template <class T>
Tensor<T> horizon_embed_batch(std::span<const int> horizons) {
  if (horizons.empty()) throw std::invalid_argument("horizon_embed_batch: empty horizon list");
  Tensor<T> out({horizons.size(), kHorizonEmbedDim});
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    const Tensor<T> row = horizon_embed<T>(horizons[i]);
    std::copy(row.data().begin(), row.data().end(), out.ptr() + i * kHorizonEmbedDim);
  }
  return out;
}

template Tensor<float> horizon_embed<float>(int);
template Tensor<double> horizon_embed<double>(int);
template Tensor<float> horizon_embed_batch<float>(std::span<const int>);
template Tensor<double> horizon_embed_batch<double>(std::span<const int>);

}  // namespace hwm::nn
