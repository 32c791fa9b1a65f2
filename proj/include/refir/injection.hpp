#pragma once

#include "refir/tensor.hpp"
#include "refir/unet.hpp"

#include <optional>
#include <string>
#include <vector>

namespace refir {

enum class FusionMode { Separate, Concat, Replace };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct InjectionConfig {
    double scale = 0.5;             // global injection strength s in [0,1]
    std::vector<std::string> sites; // resolved site ids; empty = all decoder sites
    int window = 20;                // fire when the step index t < window (the final W steps)
    bool enable_sg = true;          // spatial adaptive gating (off = scalar weighted sum)
    bool enable_da = true;          // distribution alignment
    FusionMode fusion_mode = FusionMode::Separate;

    bool scheduled(const std::string& site_id, int t) const;
};

// Fills default sites and validates ids against the model's site list.
InjectionConfig resolve_config(InjectionConfig cfg, const std::vector<AttentionSite>& model_sites);

// Features harvested from the source chain at one site, one reference.
struct SourceFeatures {
    std::vector<float> k, v;        // [heads][M][dh]
    std::vector<float> attn_out;    // the source chain's own attention result
    Tensor hidden;                  // pre-attention hidden state h_S (C x H x W)
};

struct AttentionBundle {
    std::string site_id;
    int t = 0;
    int heads = 0, tokens = 0, head_dim = 0; // source token counts must equal tokens
    std::vector<float> q_t, k_t, v_t;        // [heads][N][dh]
    std::vector<float> o_t;                  // the unhooked attention output (O_intra)
    Tensor hidden_t;                         // pre-attention hidden state h_T
    std::vector<SourceFeatures> sources;     // one per reference
};

// Dense single-head softmax attention: out[n_q x dh] = softmax(q k^T / sqrt(dh)) v.
void dense_attention(const float* q, const float* k, const float* v, float* out, int n_q, int n_kv,
                     int dh);

struct SeparatedAttention {
    std::vector<float> o_intra, o_inter; // [heads][N][dh]
};
// Intra-chain attention Q_T/K_T/V_T and inter-chain attention Q_T against
// the given source's K_S/V_S.
SeparatedAttention separate_attention(const AttentionBundle& b, std::size_t source_index = 0);

struct GateMask {
    int h = 0, w = 0;
    std::vector<float> m;        // row-major H x W, entries in [0,1]
    bool degenerate = false;     // pre-normalization max == min -> all-ones
    int zero_cosine_pairs = 0;   // pairs whose cosine was forced to 0
};

// Pixelwise cosine-similarity row sums between the chain hidden states,
// min-max normalized. Zero-vector pixels contribute cosine 0.
GateMask gate_mask(const Tensor& h_t, const Tensor& h_s);

GateMask all_ones_mask(int h, int w);

// O_fuse = (1 - sum_n w_n M_n) o_intra + sum_n w_n M_n o_inter_n, masks
// broadcast over heads and head_dim. Requires sum of weights <= 1.
std::vector<float> fuse(const std::vector<float>& o_intra,
                        const std::vector<std::vector<float>>& o_inter_list,
                        const std::vector<GateMask>& masks, const std::vector<double>& weights,
                        int heads, int tokens, int head_dim);

// Single-reference form; delegates to the k=1 multi-reference path so the
// two are bit-equal by construction.
std::vector<float> fuse_single(const std::vector<float>& o_intra, const std::vector<float>& o_inter,
                               const GateMask& mask, double weight, int heads, int tokens,
                               int head_dim);

// AdaIN over the token axis per (head, head_dim) channel:
// o' = (o - mean_f) / max(std_f, 1e-5) * std_i + mean_i.
void distribution_align(std::vector<float>& o_fuse, const std::vector<float>& o_intra, int heads,
                        int tokens, int head_dim);

struct AllocationMasses {
    double mass_t = 0.0, mass_s = 0.0; // sum to 1
};

// Softmax over concatenated keys [K_T; K_S]; mean per-query probability
// mass landing on each side.
AllocationMasses attention_allocation(const float* q_t, const float* k_t, const float* k_s,
                                      int heads, int n_q, int n_t, int n_s, int dh);
AllocationMasses attention_allocation(const AttentionBundle& b);

struct FusionTraceEntry {
    std::string site_id;
    int t = 0;
    bool fired = false;
    double mask_mean = 0.0, mask_min = 0.0, mask_max = 0.0;
    int degenerate_masks = 0;
    int zero_cosine_pairs = 0;
    std::vector<double> weights;
    double mass_t = 0.0, mass_s = 0.0;
};

struct FusionTrace {
    std::vector<FusionTraceEntry> entries;
};

// Full cross-image injection at one hooked site. Pass-through (nullopt)
// when the (site, t) pair is not scheduled or there are no sources;
// otherwise returns the substitute attention output.
std::optional<std::vector<float>> apply_injection(const AttentionBundle& bundle,
                                                  const std::vector<double>& weights,
                                                  const InjectionConfig& config,
                                                  FusionTrace* trace = nullptr);

} // namespace refir
