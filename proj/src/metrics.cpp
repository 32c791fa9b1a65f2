#include "refir/metrics.hpp"
#include "refir/errors.hpp"
#include "refir/kernels.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace refir {

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (!a.same_shape(b))
        throw Error(ErrorCode::Dimension, "psnr: shape mismatch");
    if (peak <= 0.0)
        throw Error(ErrorCode::Usage, "psnr: peak must be positive");
    double mse = kernels::sqdiff_sum(a.data.data(), b.data.data(), a.size()) /
                 static_cast<double>(a.size());
    if (mse == 0.0)
        return 100.0;
    return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& a, const Tensor& b, int window, double peak) {
    if (!a.same_shape(b))
        throw Error(ErrorCode::Dimension, "ssim: shape mismatch");
    if (a.h < window || a.w < window)
        throw Error(ErrorCode::Dimension, "ssim: image smaller than window");
    double c1 = (0.01 * peak) * (0.01 * peak);
    double c2 = (0.03 * peak) * (0.03 * peak);
    double inv_n = 1.0 / (static_cast<double>(window) * window);

    double total = 0.0;
    long count = 0;
    for (int c = 0; c < a.c; ++c) {
        const float* pa = a.plane(c);
        const float* pb = b.plane(c);
        for (int y = 0; y + window <= a.h; ++y) {
            for (int x = 0; x + window <= a.w; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int wy = 0; wy < window; ++wy) {
                    const float* ra = pa + static_cast<std::size_t>(y + wy) * a.w + x;
                    const float* rb = pb + static_cast<std::size_t>(y + wy) * a.w + x;
                    for (int wx = 0; wx < window; ++wx) {
                        double va = ra[wx], vb = rb[wx];
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                double mu_a = sa * inv_n, mu_b = sb * inv_n;
                double var_a = saa * inv_n - mu_a * mu_a;
                double var_b = sbb * inv_n - mu_b * mu_b;
                double cov = sab * inv_n - mu_a * mu_b;
                double v = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += v;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

namespace {

std::map<std::string, MetricFn>& registry() {
    static std::map<std::string, MetricFn> m = {
        {"psnr", [](const Tensor& a, const Tensor& b) { return psnr(a, b); }},
        {"ssim", [](const Tensor& a, const Tensor& b) { return ssim(a, b); }},
    };
    return m;
}

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

} // namespace

void register_metric(const std::string& name, MetricFn fn) {
    std::lock_guard lk(registry_mutex());
    registry()[name] = std::move(fn);
}

MetricFn lookup_metric(const std::string& name) {
    std::lock_guard lk(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end())
        throw Error(ErrorCode::Usage, "unknown metric: " + name);
    return it->second;
}

std::vector<std::string> metric_names() {
    std::lock_guard lk(registry_mutex());
    std::vector<std::string> names;
    for (const auto& [k, v] : registry())
        names.push_back(k);
    return names;
}

} // namespace refir
