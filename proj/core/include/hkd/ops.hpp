// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hkd/tensor.hpp"

// Differentiable primitives. Every function records a backward closure when
// any input tracks gradients. Feature maps use C x H x W layout; token
// matrices use N x D with one token per row.
namespace hkd::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

/// Adds `bias` (length shape[axis]) along `axis`.
Tensor add_bias(const Tensor& x, const Tensor& bias, std::size_t axis);

Tensor relu(const Tensor& x);
/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Natural log; every element must be positive.
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces `axis` away. A rank-1 input reduces to shape [1].
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
/// Euclidean norm along `axis` (reduced away). The gradient at a zero
/// vector is taken as zero.
Tensor l2_norm(const Tensor& x, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Cross-correlation of a C_in x H x W input with a C_out x C_in x k x k
/// kernel. `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);
Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);
/// Bilinear resize of a C x H x W map, half-pixel centers (no corner alignment).
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
/// Normalizes each row of an N x D tensor, then applies gain and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);

/// Picks x[label(h,w), h, w] from a K x H x W tensor. Positions whose label
/// equals `ignore` yield 0 and receive no gradient.
Tensor gather_channel(const Tensor& x, std::span<const std::uint8_t> labels,
                      std::uint8_t ignore);

/// Same values with the gradient edge severed.
Tensor detach(const Tensor& x);

/// 2-D feature map C x H x W to H*W x C tokens (row-major spatial order).
Tensor map_to_tokens(const Tensor& map);
Tensor tokens_to_map(const Tensor& tokens, std::size_t height, std::size_t width);

}  // namespace hkd::ops
