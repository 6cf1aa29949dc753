#pragma once

#include <span>

#include "hwm/nn/tensor.hpp"

namespace hwm::nn {

inline constexpr std::size_t kHorizonEmbedDim = 64;

/// Angular frequency of the k-th sinusoid pair (k in [0, 32)), geometric
/// between 0.05 and 20 radians per octave of horizon.
double horizon_frequency(std::size_t k);

/// Sinusoidal features of log2(T): [cos(w_k x) for k<32, sin(w_k x) for k<32].
/// Throws std::invalid_argument for T < 1.
template <class T>
Tensor<T> horizon_embed(int horizon);

/// Stacked embeddings, one row per horizon: [N, 64].
template <class T>
Tensor<T> horizon_embed_batch(std::span<const int> horizons);

}  // namespace hwm::nn
