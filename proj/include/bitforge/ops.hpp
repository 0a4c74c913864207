#pragma once

// Differentiable operations. Every function validates shapes and throws
// std::invalid_argument on mismatch.

#include <cstddef>
#include <optional>
#include <vector>

#include "bitforge/tensor.hpp"

namespace bitforge::ops {

using tensor::Tensor;

// -- convolution and resampling ---------------------------------------------

/// Cross-correlation with zero padding. input N,C,H,W; weight O,C,k,k;
/// bias O (optional).
Tensor conv2d(const Tensor& input, const Tensor& weight,
              const std::optional<Tensor>& bias, std::size_t stride = 1,
              std::size_t padding = 0);

/// Per-channel convolution; weight C,1,k,k. No bias.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight,
                        std::size_t stride = 1, std::size_t padding = 0);

/// Average pool, zero padding counted in the divisor.
Tensor avg_pool2d(const Tensor& input, std::size_t kernel, std::size_t stride,
                  std::size_t padding);

/// N, C*s*s, H, W -> N, C, H*s, W*s.
Tensor pixel_shuffle(const Tensor& input, std::size_t scale);
/// Exact inverse of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& input, std::size_t scale);

// -- elementwise -------------------------------------------------------------
// Binary operations broadcast b against a when every extent of b is either
// equal to the matching extent of a or 1 (N,C,1,1 gates, N,1,H,W maps,
// single-element scalars). Both shapes are right-aligned; rank <= 4.

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor scale(const Tensor& x, double factor);

/// Sum of all elements, shape {1}.
Tensor sum(const Tensor& x);

// -- pooling and reshaping ---------------------------------------------------

/// N,C,H,W -> N,C,1,1
Tensor global_avg_pool(const Tensor& x);
/// N,C,H,W -> N,C,1,1; gradient goes to the first maximum in scan order.
Tensor global_max_pool(const Tensor& x);
/// N,C,H,W -> N,1,H,W
Tensor channel_avg_map(const Tensor& x);
/// N,C,H,W -> N,1,H,W; ties resolve to the lowest channel.
Tensor channel_max_map(const Tensor& x);

/// Concatenates along the channel axis (axis 1).
Tensor concat(const std::vector<Tensor>& parts);

// -- losses ------------------------------------------------------------------

/// Mean binary cross entropy on logits, in the log-sum-exp form
/// max(x,0) - x*y + log(1 + exp(-|x|)). Targets must be exactly 0 or 1 and
/// never receive a gradient.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

/// Mean absolute error; subgradient 0 where prediction equals target.
Tensor mean_abs_error(const Tensor& prediction, const Tensor& target);

}  // namespace bitforge::ops
