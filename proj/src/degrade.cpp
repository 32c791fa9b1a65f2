#include "refir/degrade.hpp"
#include "refir/errors.hpp"
#include "refir/resize.hpp"
#include "refir/rng.hpp"

#include <algorithm>
#include <cmath>

namespace refir {

namespace {

Tensor degrade_pass(const Tensor& img, int pass_scale, Rng& rng, const DegradationConfig& cfg) {
    Tensor cur = img;
    if (cfg.blur_sigma_max > 0.f) {
        float sigma = static_cast<float>(rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max));
        cur = gaussian_blur(cur, sigma);
    }
    if (pass_scale > 1)
        cur = bicubic_resize(cur, cur.h / pass_scale, cur.w / pass_scale);
    if (cfg.noise_sigma_max > 0.f) {
        float sigma = static_cast<float>(rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max));
        for (auto& v : cur.data)
            v += sigma * static_cast<float>(rng.normal());
    }
    if (cfg.quantize) {
        for (auto& v : cur.data)
            v = std::round(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f;
    }
    return cur;
}

} // namespace

Tensor degrade(const Tensor& hq, const DegradationConfig& config) {
    if (config.scale < 1)
        throw Error(ErrorCode::Usage, "degrade: scale must be >= 1");
    if (hq.h % config.scale != 0 || hq.w % config.scale != 0)
        throw Error(ErrorCode::Dimension, "degrade: H and W must be divisible by scale");

    int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(config.scale))));
    int s1, s2;
    if (root * root == config.scale) {
        s1 = s2 = root;
    } else {
        s1 = 1;
        s2 = config.scale;
    }

    Rng rng(config.seed);
    Tensor out = degrade_pass(hq, s1, rng, config);
    out = degrade_pass(out, s2, rng, config);
    return clamp(out, 0.f, 1.f);
}

} // namespace refir
