#pragma once

#include "refir/tensor.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace refir {

// Named weight array with its gradient buffer.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<float> v;
    std::vector<float> g;

    std::size_t count() const { return v.size(); }
};

// Per-site attention internals, head-major [heads][tokens][head_dim].
// `out` is the model's own softmax(QK^T/sqrt(d))V result before the output
// projection; a hook may return a same-shaped substitute for it.
struct AttnTensors {
    int heads = 0, tokens = 0, head_dim = 0;
    std::vector<float> q, k, v, out;

    std::size_t per_head() const { return static_cast<std::size_t>(tokens) * head_dim; }
    std::size_t total() const { return per_head() * heads; }
};

struct SiteContext {
    std::string site_id;
    int t = 0;                    // schedule step index of the enclosing denoise step
    const AttnTensors* attn = nullptr;
    const Tensor* hidden = nullptr; // pre-attention hidden state entering the block
};

using AttentionHook = std::function<std::optional<std::vector<float>>(const SiteContext&)>;

struct CapturedSite {
    AttnTensors attn;
    Tensor hidden;
};
using StepCapture = std::map<std::string, CapturedSite>;

// Observe-only hook recording internals into `capture`. `sites` empty means
// capture everything.
AttentionHook make_capture_hook(StepCapture& capture, std::vector<std::string> sites = {});
// Runs `first` (observe-only) then `second`, returning second's verdict.
AttentionHook chain_hooks(AttentionHook first, AttentionHook second);

struct AttentionSite {
    std::string site_id; // e.g. "dec.8" = decoder attention at 1/8 resolution
    std::string stage;   // encoder | decoder | condition_branch
    int downsample = 1;  // spatial reduction factor vs. model input
    int resolution = 0;  // spatial size at the configured native input size
};

struct UNetConfig {
    int io_channels = 3;
    // channel widths at /1, /2, /4, /8; attention sits at /4 and /8
    std::array<int, 4> widths = {16, 32, 48, 64};
    int heads = 4;
    int temb_dim = 64;
    int native_size = 64; // documents site resolutions; any multiple of 8 runs
};

// Pixel-space denoising UNet with a ControlNet-style condition branch
// (encoder copy fused through zero-initialized 1x1 projections). All
// self-attention blocks are enumerable, hookable sites.
class UNet {
public:
    UNet(const UNetConfig& cfg, std::uint64_t seed);
    ~UNet();
    UNet(UNet&&) noexcept;
    UNet& operator=(UNet&&) noexcept;

    const UNetConfig& config() const;

    // Stable enumeration in forward order:
    // enc.4, enc.8, cond.4, cond.8, dec.8, dec.4
    std::vector<AttentionSite> attention_sites() const;

    // Predicts the noise component of x (model domain, H,W divisible by 8).
    // cond may be null (condition branch skipped). The hook fires at every
    // attention site; t is threaded through to the hook contexts.
    Tensor predict_noise(const Tensor& x, int t, const Tensor* cond, const AttentionHook& hook = {});

    // Training support. backward() consumes the activations cached by the
    // last predict_noise call (which must have run without substitution).
    void zero_grad();
    void backward(const Tensor& grad_out);
    std::vector<Param*> parameters();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace refir
