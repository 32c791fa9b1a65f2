#pragma once

#include "refir/schedule.hpp"
#include "refir/tensor.hpp"
#include "refir/unet.hpp"

#include <cstdint>

namespace refir {

// Deterministic DDIM update (eta = 0) with the x0 estimate clamped to
// [-1,1]. t indexes the schedule; at t == 0 the result is the clamped x0.
Tensor ddim_update(const NoiseSchedule& schedule, const Tensor& x, const Tensor& eps, int t);

// One denoising step: model eval (hook sees every attention site with this
// t) followed by the DDIM update. `capture` records per-site internals.
Tensor denoise_step(UNet& model, const NoiseSchedule& schedule, const Tensor& latent, int t,
                    const Tensor* cond, const AttentionHook& hook = {},
                    StepCapture* capture = nullptr);

// Full deterministic sampling loop from seeded Gaussian noise. If cond is
// non-null the output has its size; otherwise (h, w). Output in [-1,1].
Tensor sample(UNet& model, const NoiseSchedule& schedule, const Tensor* cond, int h, int w,
              std::uint64_t seed, const AttentionHook& hook = {});

// Forward diffusion: sqrt(abar_t) x0 + sqrt(1-abar_t) noise.
Tensor add_noise(const NoiseSchedule& schedule, const Tensor& x0, const Tensor& noise, int t);

} // namespace refir
