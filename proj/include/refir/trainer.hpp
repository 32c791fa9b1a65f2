#pragma once

#include "refir/degrade.hpp"
#include "refir/schedule.hpp"
#include "refir/tensor.hpp"
#include "refir/unet.hpp"

#include <cstdint>
#include <vector>

namespace refir {

// Noise-prediction training (Adam, batch size 1, seeded shuffles) on pairs
// (HQ crop, bicubic-upsampled degraded crop) produced on the fly.
struct TrainConfig {
    int epochs = 100;
    std::uint64_t seed = 0;
    double lr = 2e-3;
    int crop = 0; // 0 = full image; otherwise square crop size (multiple of 8 and of scale)
    DegradationConfig degradation;
};

struct TrainResult {
    std::vector<double> loss_curve; // mean loss per epoch
};

TrainResult train(UNet& model, const NoiseSchedule& schedule, const std::vector<Tensor>& hq_images,
                  const TrainConfig& config);

// Adam with bias correction, one slot pair per parameter.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step();

private:
    std::vector<Param*> params_;
    std::vector<std::vector<float>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long step_count_ = 0;
};

} // namespace refir
