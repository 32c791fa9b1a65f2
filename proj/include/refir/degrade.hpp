#pragma once

#include "refir/tensor.hpp"

#include <cstdint>

namespace refir {

// Simplified second-order degradation: blur -> bicubic downsample ->
// additive Gaussian noise -> optional 8-bit quantization, applied twice
// with independently sampled parameters. Blur/noise sigmas are drawn
// uniformly from the configured ranges per pass.
struct DegradationConfig {
    int scale = 4;                 // total downsampling factor
    float blur_sigma_min = 0.f;    // <= 0 max disables blur
    float blur_sigma_max = 1.2f;
    float noise_sigma_min = 0.f;
    float noise_sigma_max = 0.04f;
    bool quantize = true;
    std::uint64_t seed = 0;
};

// hq is in [0,1]; H and W must be divisible by scale. When scale has an
// integer square root each pass downsamples by sqrt(scale); otherwise the
// first pass keeps the size and the second applies the full factor.
// The output is clamped to [0,1].
Tensor degrade(const Tensor& hq, const DegradationConfig& config);

} // namespace refir
