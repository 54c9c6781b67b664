#pragma once

// Differentiable operations over NCHW tensors. Every op records a node on the
// active tape when at least one input requires a gradient.

#include "degsr/tensor.hpp"

namespace degsr {

// weight: (outC, inC, kH, kW); bias: outC elements or undefined. Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

// (N, C*r*r, H, W) -> (N, C, H*r, W*r)
Tensor pixel_shuffle(const Tensor& input, int r);
// Inverse permutation of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& input, int r);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope);
Tensor sigmoid(const Tensor& x);

// Align-corners-false bilinear sampling.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

// 2x2 window, stride 2, floor semantics.
Tensor max_pool2x2(const Tensor& input);
// (N, C, H, W) -> (N, C, 1, 1)
Tensor global_avg_pool(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// scale * x + shift with scalar constants
Tensor affine(const Tensor& x, float scale, float shift);
// Per-channel constants: x[:, c] * scale[c] + shift[c]
Tensor channel_affine(const Tensor& x, std::span<const float> scale, std::span<const float> shift);

// Derivative is sign(x) with sign(0) = 0.
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
// Derivative taken as 0 where the output is 0.
Tensor sqrt(const Tensor& x);
Tensor log(const Tensor& x);
// Values outside [lo, hi] are clamped and pass no gradient.
Tensor clamp(const Tensor& x, float lo, float hi);

// Reductions to a 1x1x1x1 scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// (N, C, H, W) -> (N, 1, 1, 1)
Tensor sum_per_sample(const Tensor& x);

// Forward differences along width (W-1 columns) and height (H-1 rows).
Tensor diff_h(const Tensor& x);
Tensor diff_v(const Tensor& x);

}  // namespace degsr
