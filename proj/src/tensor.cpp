#include "refir/tensor.hpp"
#include "refir/errors.hpp"

#include <algorithm>
#include <cmath>

namespace refir {

Tensor clamp(const Tensor& t, float lo, float hi) {
    Tensor out = t;
    for (auto& v : out.data)
        v = std::clamp(v, lo, hi);
    return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw Error(ErrorCode::Dimension, "max_abs_diff: shape mismatch");
    float m = 0.f;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

Tensor to_model_range(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data)
        v = v * 2.f - 1.f;
    return out;
}

Tensor to_file_range(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data)
        v = (v + 1.f) * 0.5f;
    return out;
}

Tensor to_gray(const Tensor& t) {
    if (t.c == 1)
        return t;
    if (t.c != 3)
        throw Error(ErrorCode::Dimension, "to_gray: expected 1 or 3 channels");
    Tensor out(1, t.h, t.w);
    const float* r = t.plane(0);
    const float* g = t.plane(1);
    const float* b = t.plane(2);
    float* o = out.plane(0);
    std::size_t n = static_cast<std::size_t>(t.h) * t.w;
    for (std::size_t i = 0; i < n; ++i)
        o[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    return out;
}

} // namespace refir
