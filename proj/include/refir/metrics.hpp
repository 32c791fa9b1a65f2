#pragma once

#include "refir/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace refir {

// 10 log10(peak^2 / MSE); identical images return the 100 dB cap.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean local SSIM over sliding windows (default 8x8, stride 1), standard
// constants c1 = (0.01 peak)^2, c2 = (0.03 peak)^2, averaged over channels.
double ssim(const Tensor& a, const Tensor& b, int window = 8, double peak = 1.0);

// Metric registry; psnr and ssim are built in, external metrics plug in.
using MetricFn = std::function<double(const Tensor&, const Tensor&)>;
void register_metric(const std::string& name, MetricFn fn);
MetricFn lookup_metric(const std::string& name);
std::vector<std::string> metric_names();

} // namespace refir
