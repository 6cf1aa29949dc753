#pragma once

#include <cstddef>

#include "hwm/nn/graph.hpp"

// Differentiable primitives. Batched tensors carry the batch as dimension 0:
// dense activations are [N, F], fields are [N, C, H, W].
namespace hwm::nn {

template <class T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

/// Stride-1 convolution with odd square kernel and zero "same" padding.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias);

/// out[n, c, ...] = gamma[n, c] * x[n, c, ...] + beta[n, c]
template <class T>
Var<T> film(Var<T> x, Var<T> gamma, Var<T> beta);

template <class T>
Var<T> silu(Var<T> x);
template <class T>
Var<T> relu(Var<T> x);

template <class T>
Var<T> add(Var<T> a, Var<T> b);
template <class T>
Var<T> sub(Var<T> a, Var<T> b);
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
template <class T>
Var<T> add_scalar(Var<T> x, T c);
template <class T>
Var<T> scale(Var<T> x, T c);

template <class T>
Var<T> avg_pool2(Var<T> x);
template <class T>
Var<T> upsample_nearest2(Var<T> x);
template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b);

/// Columns [offset, offset + len) of a [N, F] tensor.
template <class T>
Var<T> slice_cols(Var<T> x, std::size_t offset, std::size_t len);

template <class T>
Var<T> reshape(Var<T> x, Shape shape);

template <class T>
Var<T> sum(Var<T> x);
template <class T>
Var<T> mean(Var<T> x);
/// Mean of squared differences over all elements.
template <class T>
Var<T> mse(Var<T> a, Var<T> b);

}  // namespace hwm::nn
