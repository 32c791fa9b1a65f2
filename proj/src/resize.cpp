#include "refir/resize.hpp"
#include "refir/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace refir {

namespace {

// Keys cubic kernel, a = -0.5.
inline float cubic_weight(float t) {
    t = std::fabs(t);
    if (t <= 1.f)
        return ((1.5f * t - 2.5f) * t) * t + 1.f;
    if (t < 2.f)
        return (((-0.5f * t) + 2.5f) * t - 4.f) * t + 2.f;
    return 0.f;
}

struct TapSet {
    int idx[4];
    float w[4];
};

std::vector<TapSet> make_taps(int in_size, int out_size) {
    std::vector<TapSet> taps(out_size);
    double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        int base = static_cast<int>(std::floor(src));
        float frac = static_cast<float>(src - base);
        for (int k = 0; k < 4; ++k) {
            int idx = base - 1 + k;
            taps[o].idx[k] = std::clamp(idx, 0, in_size - 1);
            taps[o].w[k] = cubic_weight(frac - static_cast<float>(k - 1));
        }
    }
    return taps;
}

} // namespace

Tensor bicubic_resize(const Tensor& src, int out_h, int out_w) {
    if (src.empty() || out_h < 1 || out_w < 1)
        throw Error(ErrorCode::Dimension, "bicubic_resize: bad sizes");
    if (out_h == src.h && out_w == src.w)
        return src;

    auto htaps = make_taps(src.w, out_w);
    auto vtaps = make_taps(src.h, out_h);

    // horizontal pass
    Tensor mid(src.c, src.h, out_w);
    for (int ci = 0; ci < src.c; ++ci) {
        const float* in = src.plane(ci);
        float* out = mid.plane(ci);
        for (int y = 0; y < src.h; ++y) {
            const float* row = in + static_cast<std::size_t>(y) * src.w;
            float* orow = out + static_cast<std::size_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                const TapSet& t = htaps[x];
                orow[x] = t.w[0] * row[t.idx[0]] + t.w[1] * row[t.idx[1]] +
                          t.w[2] * row[t.idx[2]] + t.w[3] * row[t.idx[3]];
            }
        }
    }

    // vertical pass
    Tensor dst(src.c, out_h, out_w);
    for (int ci = 0; ci < src.c; ++ci) {
        const float* in = mid.plane(ci);
        float* out = dst.plane(ci);
        for (int y = 0; y < out_h; ++y) {
            const TapSet& t = vtaps[y];
            const float* r0 = in + static_cast<std::size_t>(t.idx[0]) * out_w;
            const float* r1 = in + static_cast<std::size_t>(t.idx[1]) * out_w;
            const float* r2 = in + static_cast<std::size_t>(t.idx[2]) * out_w;
            const float* r3 = in + static_cast<std::size_t>(t.idx[3]) * out_w;
            float* orow = out + static_cast<std::size_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x)
                orow[x] = t.w[0] * r0[x] + t.w[1] * r1[x] + t.w[2] * r2[x] + t.w[3] * r3[x];
        }
    }
    return dst;
}

int reflect101(int idx, int n) {
    if (n == 1)
        return 0;
    int period = 2 * n - 2;
    int m = idx % period;
    if (m < 0)
        m += period;
    return m < n ? m : period - m;
}

Tensor reflect_pad(const Tensor& src, int target_h, int target_w) {
    if (target_h < src.h || target_w < src.w)
        throw Error(ErrorCode::Dimension, "reflect_pad: target smaller than source");
    if (target_h == src.h && target_w == src.w)
        return src;
    Tensor dst(src.c, target_h, target_w);
    for (int ci = 0; ci < src.c; ++ci) {
        for (int y = 0; y < target_h; ++y) {
            int sy = reflect101(y, src.h);
            for (int x = 0; x < target_w; ++x)
                dst.at(ci, y, x) = src.at(ci, sy, reflect101(x, src.w));
        }
    }
    return dst;
}

Tensor center_crop(const Tensor& src, int target_h, int target_w) {
    if (target_h > src.h || target_w > src.w)
        throw Error(ErrorCode::Dimension, "center_crop: target larger than source");
    int y0 = (src.h - target_h) / 2;
    int x0 = (src.w - target_w) / 2;
    Tensor dst(src.c, target_h, target_w);
    for (int ci = 0; ci < src.c; ++ci)
        for (int y = 0; y < target_h; ++y)
            for (int x = 0; x < target_w; ++x)
                dst.at(ci, y, x) = src.at(ci, y0 + y, x0 + x);
    return dst;
}

Tensor gaussian_blur(const Tensor& src, float sigma) {
    if (sigma <= 0.f)
        return src;
    int radius = static_cast<int>(std::ceil(3.f * sigma));
    std::vector<float> kernel(2 * radius + 1);
    float ksum = 0.f;
    for (int i = -radius; i <= radius; ++i) {
        float v = std::exp(-0.5f * (i * i) / (sigma * sigma));
        kernel[i + radius] = v;
        ksum += v;
    }
    for (auto& v : kernel)
        v /= ksum;

    Tensor mid(src.c, src.h, src.w);
    for (int ci = 0; ci < src.c; ++ci)
        for (int y = 0; y < src.h; ++y)
            for (int x = 0; x < src.w; ++x) {
                float acc = 0.f;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[k + radius] * src.at(ci, y, std::clamp(x + k, 0, src.w - 1));
                mid.at(ci, y, x) = acc;
            }
    Tensor dst(src.c, src.h, src.w);
    for (int ci = 0; ci < src.c; ++ci)
        for (int y = 0; y < src.h; ++y)
            for (int x = 0; x < src.w; ++x) {
                float acc = 0.f;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[k + radius] * mid.at(ci, std::clamp(y + k, 0, src.h - 1), x);
                dst.at(ci, y, x) = acc;
            }
    return dst;
}

} // namespace refir
