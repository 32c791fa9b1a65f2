#include "refir/sampler.hpp"
#include "refir/errors.hpp"
#include "refir/rng.hpp"

#include <algorithm>
#include <cmath>

namespace refir {

Tensor ddim_update(const NoiseSchedule& schedule, const Tensor& x, const Tensor& eps, int t) {
    if (t < 0 || t >= schedule.total_steps)
        throw Error(ErrorCode::Usage, "step index out of schedule range");
    float abar = schedule.alpha_bar[t];
    float abar_prev = t > 0 ? schedule.alpha_bar[t - 1] : 1.f;
    float sa = std::sqrt(abar);
    float sna = std::sqrt(1.f - abar);
    float sap = std::sqrt(abar_prev);
    float snap = std::sqrt(1.f - abar_prev);

    Tensor out(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) {
        float x0 = (x.data[i] - sna * eps.data[i]) / sa;
        x0 = std::clamp(x0, -1.f, 1.f);
        out.data[i] = sap * x0 + snap * eps.data[i];
    }
    return out;
}

Tensor denoise_step(UNet& model, const NoiseSchedule& schedule, const Tensor& latent, int t,
                    const Tensor* cond, const AttentionHook& hook, StepCapture* capture) {
    AttentionHook effective = hook;
    if (capture)
        effective = chain_hooks(make_capture_hook(*capture), hook);
    Tensor eps = model.predict_noise(latent, t, cond, effective);
    return ddim_update(schedule, latent, eps, t);
}

Tensor sample(UNet& model, const NoiseSchedule& schedule, const Tensor* cond, int h, int w,
              std::uint64_t seed, const AttentionHook& hook) {
    if (schedule.total_steps < 2)
        throw Error(ErrorCode::Usage, "schedule/model mismatch: need at least 2 steps");
    if (cond) {
        h = cond->h;
        w = cond->w;
    }
    if (h <= 0 || w <= 0)
        throw Error(ErrorCode::Dimension, "sample: no target size");
    Tensor x(model.config().io_channels, h, w);
    Rng rng(seed);
    rng.fill_normal(x.data.data(), x.size());
    for (int t = schedule.total_steps - 1; t >= 0; --t)
        x = denoise_step(model, schedule, x, t, cond, hook);
    return x;
}

Tensor add_noise(const NoiseSchedule& schedule, const Tensor& x0, const Tensor& noise, int t) {
    float sa = std::sqrt(schedule.alpha_bar[t]);
    float sna = std::sqrt(1.f - schedule.alpha_bar[t]);
    Tensor out(x0.c, x0.h, x0.w);
    for (std::size_t i = 0; i < x0.size(); ++i)
        out.data[i] = sa * x0.data[i] + sna * noise.data[i];
    return out;
}

} // namespace refir
