#pragma once

#include "refir/tensor.hpp"

namespace refir {

// Separable Keys bicubic (a = -0.5), center-aligned sampling, edges clamped.
Tensor bicubic_resize(const Tensor& src, int out_h, int out_w);

// Pads bottom/right up to (target_h, target_w) mirroring without repeating
// the edge sample (reflect-101). Multi-bounce for pads larger than the
// source.
Tensor reflect_pad(const Tensor& src, int target_h, int target_w);

Tensor center_crop(const Tensor& src, int target_h, int target_w);

// Separable Gaussian blur, kernel radius ceil(3*sigma), edges clamped.
// sigma <= 0 returns the input unchanged.
Tensor gaussian_blur(const Tensor& src, float sigma);

// Reflect-101 index fold into [0, n).
int reflect101(int idx, int n);

} // namespace refir
