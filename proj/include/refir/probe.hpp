#pragma once

#include "refir/schedule.hpp"
#include "refir/tensor.hpp"
#include "refir/unet.hpp"

#include <optional>
#include <string>
#include <vector>

namespace refir {

struct SpectrumCurve {
    std::vector<double> radius;        // integer annulus radii, ascending
    std::vector<double> log_amplitude; // mean log(1+|F|) per annulus
};

// Channel-mean 2D DFT, log amplitude, radially averaged over integer-radius
// annuli on centered frequency coordinates. Requires H == W >= 8.
SpectrumCurve power_spectrum(const Tensor& latent);

// Mean log-amplitude over the top quartile of radii (DC excluded).
double high_frequency_energy(const SpectrumCurve& curve);

struct PCAResult {
    std::vector<std::vector<float>> components; // 3 orthonormal vectors of dim C
    std::vector<double> explained_ratios;       // non-increasing, in [0,1]
    Tensor projection;                          // 3 x H x W, min-max normalized per channel
};

// Pixels as HW samples in R^C: center, eigendecompose the covariance, keep
// the top three components. Requires C >= 3 and H*W >= 3.
PCAResult pca_top3(const Tensor& latent);

struct ProbeOptions {
    int stride = 10;                // capture at t = T-1 and every t % stride == 0
    std::optional<Tensor> reference; // [0,1]; when absent the chain is paired with itself
    std::uint64_t seed = 1;
    bool write_pca_maps = true;
};

struct SiteStats {
    std::string site_id;
    double high_freq_energy = 0.0; // averaged over captured timesteps
};

struct ProbeReport {
    std::vector<SiteStats> per_site;
    double mass_t = 0.0, mass_s = 0.0; // mean attention allocation
    int captured = 0;                  // (site, t) pairs captured
    bool cond_highfreq_decreasing = false;
    bool dec_highfreq_increasing = false;
};

// One hooked sampling pass conditioned on `image` ([0,1], H,W divisible
// by 8); emits spectra.csv, PCA maps, and allocation.json into out_dir.
ProbeReport probe_report(UNet& model, const NoiseSchedule& schedule, const Tensor& image,
                         const std::string& out_dir, const ProbeOptions& opts = {});

} // namespace refir
