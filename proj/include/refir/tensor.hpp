#pragma once

#include <cstddef>
#include <vector>

namespace refir {

// Dense C x H x W float tensor, channel-major. Images use [0,1] in file
// domain and [-1,1] in model domain; latents are unbounded.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, 0.f) {}

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    float& at(int ci, int y, int x) { return data[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
    float at(int ci, int y, int x) const { return data[(static_cast<std::size_t>(ci) * h + y) * w + x]; }

    float* plane(int ci) { return data.data() + static_cast<std::size_t>(ci) * h * w; }
    const float* plane(int ci) const { return data.data() + static_cast<std::size_t>(ci) * h * w; }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

// Elementwise helpers used across the pipeline.
Tensor clamp(const Tensor& t, float lo, float hi);
float max_abs_diff(const Tensor& a, const Tensor& b);
// [0,1] file domain <-> [-1,1] model domain
Tensor to_model_range(const Tensor& t);
Tensor to_file_range(const Tensor& t);
// Rec.601 luma; 1-channel input is passed through.
Tensor to_gray(const Tensor& t);

} // namespace refir
