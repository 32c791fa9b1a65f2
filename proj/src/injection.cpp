#include "refir/injection.hpp"
#include "refir/errors.hpp"
#include "refir/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace refir {

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "separate")
        return FusionMode::Separate;
    if (s == "concat")
        return FusionMode::Concat;
    if (s == "replace")
        return FusionMode::Replace;
    throw Error(ErrorCode::Config, "unknown fusion mode: " + s);
}

std::string to_string(FusionMode m) {
    switch (m) {
    case FusionMode::Concat:
        return "concat";
    case FusionMode::Replace:
        return "replace";
    default:
        return "separate";
    }
}

bool InjectionConfig::scheduled(const std::string& site_id, int t) const {
    if (t >= window)
        return false;
    return std::find(sites.begin(), sites.end(), site_id) != sites.end();
}

InjectionConfig resolve_config(InjectionConfig cfg, const std::vector<AttentionSite>& model_sites) {
    if (cfg.scale < 0.0 || cfg.scale > 1.0)
        throw Error(ErrorCode::Config, "injection scale must be in [0,1]");
    if (cfg.window < 0)
        throw Error(ErrorCode::Config, "injection window must be >= 0");
    if (cfg.sites.empty()) {
        for (const auto& s : model_sites)
            if (s.stage == "decoder")
                cfg.sites.push_back(s.site_id);
    } else {
        for (const auto& id : cfg.sites) {
            bool known = std::any_of(model_sites.begin(), model_sites.end(),
                                     [&](const AttentionSite& s) { return s.site_id == id; });
            if (!known)
                throw Error(ErrorCode::Config, "unknown site id: " + id);
        }
    }
    return cfg;
}

void dense_attention(const float* q, const float* k, const float* v, float* out, int n_q, int n_kv,
                     int dh) {
    std::vector<float> scores(static_cast<std::size_t>(n_q) * n_kv);
    kernels::gemm_nt(q, k, scores.data(), n_q, n_kv, dh, false);
    kernels::scale(scores.data(), scores.size(), 1.f / std::sqrt(static_cast<float>(dh)));
    for (int r = 0; r < n_q; ++r)
        kernels::softmax_row(scores.data() + static_cast<std::size_t>(r) * n_kv, n_kv);
    kernels::gemm(scores.data(), v, out, n_q, dh, n_kv, false);
}

SeparatedAttention separate_attention(const AttentionBundle& b, std::size_t source_index) {
    if (source_index >= b.sources.size())
        throw Error(ErrorCode::Usage, "separate_attention: source index out of range");
    const SourceFeatures& src = b.sources[source_index];
    std::size_t per_head = static_cast<std::size_t>(b.tokens) * b.head_dim;
    if (b.q_t.size() != per_head * b.heads || b.k_t.size() != b.q_t.size() ||
        b.v_t.size() != b.q_t.size() || src.k.size() != b.q_t.size() ||
        src.v.size() != b.q_t.size())
        throw Error(ErrorCode::Dimension, "separate_attention: bundle matrices disagree in shape");

    SeparatedAttention out;
    out.o_intra.resize(b.q_t.size());
    out.o_inter.resize(b.q_t.size());
    for (int h = 0; h < b.heads; ++h) {
        std::size_t off = static_cast<std::size_t>(h) * per_head;
        dense_attention(b.q_t.data() + off, b.k_t.data() + off, b.v_t.data() + off,
                        out.o_intra.data() + off, b.tokens, b.tokens, b.head_dim);
        dense_attention(b.q_t.data() + off, src.k.data() + off, src.v.data() + off,
                        out.o_inter.data() + off, b.tokens, b.tokens, b.head_dim);
    }
    return out;
}

GateMask all_ones_mask(int h, int w) {
    GateMask g;
    g.h = h;
    g.w = w;
    g.m.assign(static_cast<std::size_t>(h) * w, 1.f);
    g.degenerate = true;
    return g;
}

GateMask gate_mask(const Tensor& h_t, const Tensor& h_s) {
    if (!h_t.same_shape(h_s))
        throw Error(ErrorCode::Dimension, "gate_mask: hidden state shapes differ");
    if (h_t.c < 1 || h_t.size() == 0)
        throw Error(ErrorCode::Dimension, "gate_mask: empty hidden state");

    int hw = h_t.h * h_t.w;
    int c = h_t.c;

    // Row i of the HW x HW cosine matrix sums to cos_hat(t_i) . sum_j cos_hat(s_j),
    // so one pass over s and one dot per t pixel suffice.
    std::vector<float> sbar(c, 0.f);
    int zero_s = 0;
    for (int j = 0; j < hw; ++j) {
        float nrm = 0.f;
        for (int ci = 0; ci < c; ++ci) {
            float v = h_s.data[static_cast<std::size_t>(ci) * hw + j];
            nrm += v * v;
        }
        if (nrm <= 0.f) {
            ++zero_s;
            continue;
        }
        float inv = 1.f / std::sqrt(nrm);
        for (int ci = 0; ci < c; ++ci)
            sbar[ci] += h_s.data[static_cast<std::size_t>(ci) * hw + j] * inv;
    }

    GateMask g;
    g.h = h_t.h;
    g.w = h_t.w;
    g.m.resize(hw);
    int zero_t = 0;
    for (int i = 0; i < hw; ++i) {
        float nrm = 0.f;
        for (int ci = 0; ci < c; ++ci) {
            float v = h_t.data[static_cast<std::size_t>(ci) * hw + i];
            nrm += v * v;
        }
        if (nrm <= 0.f) {
            ++zero_t;
            g.m[i] = 0.f;
            continue;
        }
        float inv = 1.f / std::sqrt(nrm);
        float acc = 0.f;
        for (int ci = 0; ci < c; ++ci)
            acc += h_t.data[static_cast<std::size_t>(ci) * hw + i] * inv * sbar[ci];
        g.m[i] = acc;
    }
    g.zero_cosine_pairs = zero_t * hw + (hw - zero_t) * zero_s;

    float lo = *std::min_element(g.m.begin(), g.m.end());
    float hi = *std::max_element(g.m.begin(), g.m.end());
    if (hi - lo <= 0.f) {
        g.degenerate = true;
        std::fill(g.m.begin(), g.m.end(), 1.f);
    } else {
        float inv = 1.f / (hi - lo);
        for (auto& v : g.m)
            v = (v - lo) * inv;
    }
    return g;
}

std::vector<float> fuse(const std::vector<float>& o_intra,
                        const std::vector<std::vector<float>>& o_inter_list,
                        const std::vector<GateMask>& masks, const std::vector<double>& weights,
                        int heads, int tokens, int head_dim) {
    std::size_t k = o_inter_list.size();
    if (k == 0 || masks.size() != k || weights.size() != k)
        throw Error(ErrorCode::Usage, "fuse: list lengths disagree");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0)
            throw Error(ErrorCode::Usage, "fuse: negative weight");
        wsum += w;
    }
    if (wsum > 1.0 + 1e-12)
        throw Error(ErrorCode::Usage, "fuse: weights sum over 1");

    std::size_t per_head = static_cast<std::size_t>(tokens) * head_dim;
    std::size_t total = per_head * heads;
    if (o_intra.size() != total)
        throw Error(ErrorCode::Dimension, "fuse: o_intra shape mismatch");
    for (std::size_t n = 0; n < k; ++n) {
        if (o_inter_list[n].size() != total)
            throw Error(ErrorCode::Dimension, "fuse: o_inter shape mismatch");
        if (static_cast<int>(masks[n].m.size()) != tokens)
            throw Error(ErrorCode::Dimension, "fuse: mask token count mismatch");
    }

    std::vector<float> out(total);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < tokens; ++i) {
            float wtot = 0.f;
            for (std::size_t n = 0; n < k; ++n)
                wtot += static_cast<float>(weights[n]) * masks[n].m[i];
            std::size_t base = (static_cast<std::size_t>(h) * tokens + i) * head_dim;
            float coef = 1.f - wtot;
            for (int d = 0; d < head_dim; ++d)
                out[base + d] = coef * o_intra[base + d];
            for (std::size_t n = 0; n < k; ++n) {
                float wn = static_cast<float>(weights[n]) * masks[n].m[i];
                const float* src = o_inter_list[n].data() + base;
                for (int d = 0; d < head_dim; ++d)
                    out[base + d] += wn * src[d];
            }
        }
    }
    return out;
}

std::vector<float> fuse_single(const std::vector<float>& o_intra, const std::vector<float>& o_inter,
                               const GateMask& mask, double weight, int heads, int tokens,
                               int head_dim) {
    return fuse(o_intra, {o_inter}, {mask}, {weight}, heads, tokens, head_dim);
}

void distribution_align(std::vector<float>& o_fuse, const std::vector<float>& o_intra, int heads,
                        int tokens, int head_dim) {
    if (o_fuse.size() != o_intra.size())
        throw Error(ErrorCode::Dimension, "distribution_align: shape mismatch");
    constexpr double eps = 1e-5;
    for (int h = 0; h < heads; ++h) {
        for (int d = 0; d < head_dim; ++d) {
            double sf = 0.0, sf2 = 0.0, si = 0.0, si2 = 0.0;
            for (int i = 0; i < tokens; ++i) {
                std::size_t idx = (static_cast<std::size_t>(h) * tokens + i) * head_dim + d;
                double f = o_fuse[idx];
                double a = o_intra[idx];
                sf += f;
                sf2 += f * f;
                si += a;
                si2 += a * a;
            }
            double inv_n = 1.0 / tokens;
            double mu_f = sf * inv_n;
            double mu_i = si * inv_n;
            double var_f = std::max(sf2 * inv_n - mu_f * mu_f, 0.0);
            double var_i = std::max(si2 * inv_n - mu_i * mu_i, 0.0);
            double std_f = std::sqrt(var_f);
            double std_i = std::sqrt(var_i);
            // identical statistics give the exact identity map
            double r = (std_f == std_i) ? 1.0 : std_i / std::max(std_f, eps);
            float rf = static_cast<float>(r);
            float shift = static_cast<float>(mu_i - r * mu_f);
            for (int i = 0; i < tokens; ++i) {
                std::size_t idx = (static_cast<std::size_t>(h) * tokens + i) * head_dim + d;
                o_fuse[idx] = o_fuse[idx] * rf + shift;
            }
        }
    }
}

AllocationMasses attention_allocation(const float* q_t, const float* k_t, const float* k_s,
                                      int heads, int n_q, int n_t, int n_s, int dh) {
    double mass_t = 0.0, mass_s = 0.0;
    std::size_t rows = 0;
    std::vector<double> logits(static_cast<std::size_t>(n_t) + n_s);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
        const float* qh = q_t + static_cast<std::size_t>(h) * n_q * dh;
        const float* kth = k_t + static_cast<std::size_t>(h) * n_t * dh;
        const float* ksh = k_s + static_cast<std::size_t>(h) * n_s * dh;
        for (int i = 0; i < n_q; ++i) {
            const float* q = qh + static_cast<std::size_t>(i) * dh;
            for (int j = 0; j < n_t; ++j)
                logits[j] = inv_sqrt * kernels::dot(q, kth + static_cast<std::size_t>(j) * dh, dh);
            for (int j = 0; j < n_s; ++j)
                logits[n_t + j] =
                    inv_sqrt * kernels::dot(q, ksh + static_cast<std::size_t>(j) * dh, dh);
            double m = *std::max_element(logits.begin(), logits.end());
            double pt = 0.0, ps = 0.0;
            for (int j = 0; j < n_t; ++j)
                pt += std::exp(logits[j] - m);
            for (int j = 0; j < n_s; ++j)
                ps += std::exp(logits[n_t + j] - m);
            double z = pt + ps;
            mass_t += pt / z;
            mass_s += ps / z;
            ++rows;
        }
    }
    return {mass_t / static_cast<double>(rows), mass_s / static_cast<double>(rows)};
}

AllocationMasses attention_allocation(const AttentionBundle& b) {
    if (b.sources.empty())
        throw Error(ErrorCode::Usage, "attention_allocation: no sources in bundle");
    // concatenate all source keys
    std::size_t per_head = static_cast<std::size_t>(b.tokens) * b.head_dim;
    int n_s = b.tokens * static_cast<int>(b.sources.size());
    std::vector<float> ks(static_cast<std::size_t>(b.heads) * n_s * b.head_dim);
    for (int h = 0; h < b.heads; ++h) {
        float* dst = ks.data() + static_cast<std::size_t>(h) * n_s * b.head_dim;
        for (std::size_t n = 0; n < b.sources.size(); ++n) {
            const float* src = b.sources[n].k.data() + static_cast<std::size_t>(h) * per_head;
            std::memcpy(dst + n * per_head, src, per_head * sizeof(float));
        }
    }
    return attention_allocation(b.q_t.data(), b.k_t.data(), ks.data(), b.heads, b.tokens, b.tokens,
                                n_s, b.head_dim);
}

namespace {

std::vector<float> concat_mode_output(const AttentionBundle& b) {
    std::size_t per_head = static_cast<std::size_t>(b.tokens) * b.head_dim;
    int n_kv = b.tokens * (1 + static_cast<int>(b.sources.size()));
    std::vector<float> kcat(static_cast<std::size_t>(n_kv) * b.head_dim);
    std::vector<float> vcat(kcat.size());
    std::vector<float> out(per_head * b.heads);
    for (int h = 0; h < b.heads; ++h) {
        std::size_t off = static_cast<std::size_t>(h) * per_head;
        std::memcpy(kcat.data(), b.k_t.data() + off, per_head * sizeof(float));
        std::memcpy(vcat.data(), b.v_t.data() + off, per_head * sizeof(float));
        for (std::size_t n = 0; n < b.sources.size(); ++n) {
            std::memcpy(kcat.data() + (n + 1) * per_head, b.sources[n].k.data() + off,
                        per_head * sizeof(float));
            std::memcpy(vcat.data() + (n + 1) * per_head, b.sources[n].v.data() + off,
                        per_head * sizeof(float));
        }
        dense_attention(b.q_t.data() + off, kcat.data(), vcat.data(), out.data() + off, b.tokens,
                        n_kv, b.head_dim);
    }
    return out;
}

std::vector<float> replace_mode_output(const AttentionBundle& b, const std::vector<double>& weights) {
    // The substitute is the source chain's own attention result; with
    // several references they are combined with unit-sum weights (the
    // global scale is not re-applied here).
    double wsum = 0.0;
    for (double w : weights)
        wsum += w;
    std::vector<double> wn(weights.size());
    for (std::size_t i = 0; i < wn.size(); ++i)
        wn[i] = wsum > 0.0 ? weights[i] / wsum : 1.0 / static_cast<double>(wn.size());
    std::vector<float> out(b.o_t.size(), 0.f);
    for (std::size_t n = 0; n < b.sources.size(); ++n)
        kernels::axpy(static_cast<float>(wn[n]), b.sources[n].attn_out.data(), out.data(),
                      out.size());
    return out;
}

} // namespace

std::optional<std::vector<float>> apply_injection(const AttentionBundle& bundle,
                                                  const std::vector<double>& weights,
                                                  const InjectionConfig& config,
                                                  FusionTrace* trace) {
    if (!config.scheduled(bundle.site_id, bundle.t) || bundle.sources.empty())
        return std::nullopt;
    if (weights.size() != bundle.sources.size())
        throw Error(ErrorCode::Usage, "apply_injection: one weight per source required");

    FusionTraceEntry entry;
    entry.site_id = bundle.site_id;
    entry.t = bundle.t;
    entry.fired = true;
    entry.weights = weights;

    std::vector<float> substitute;
    switch (config.fusion_mode) {
    case FusionMode::Concat:
        substitute = concat_mode_output(bundle);
        break;
    case FusionMode::Replace:
        substitute = replace_mode_output(bundle, weights);
        break;
    case FusionMode::Separate:
    default: {
        std::vector<std::vector<float>> inters;
        std::vector<GateMask> masks;
        inters.reserve(bundle.sources.size());
        masks.reserve(bundle.sources.size());
        for (std::size_t n = 0; n < bundle.sources.size(); ++n) {
            inters.push_back(separate_attention(bundle, n).o_inter);
            if (config.enable_sg)
                masks.push_back(gate_mask(bundle.hidden_t, bundle.sources[n].hidden));
            else
                masks.push_back(all_ones_mask(bundle.hidden_t.h, bundle.hidden_t.w));
        }
        // the model's own attention output is O_intra
        substitute =
            fuse(bundle.o_t, inters, masks, weights, bundle.heads, bundle.tokens, bundle.head_dim);
        if (config.enable_da)
            distribution_align(substitute, bundle.o_t, bundle.heads, bundle.tokens, bundle.head_dim);

        if (trace) {
            double msum = 0.0;
            double mmin = 1.0, mmax = 0.0;
            std::size_t count = 0;
            for (const auto& g : masks) {
                for (float v : g.m) {
                    msum += v;
                    mmin = std::min<double>(mmin, v);
                    mmax = std::max<double>(mmax, v);
                }
                count += g.m.size();
                entry.degenerate_masks += g.degenerate ? 1 : 0;
                entry.zero_cosine_pairs += g.zero_cosine_pairs;
            }
            entry.mask_mean = msum / static_cast<double>(count);
            entry.mask_min = mmin;
            entry.mask_max = mmax;
        }
        break;
    }
    }

    if (trace) {
        AllocationMasses am = attention_allocation(bundle);
        entry.mass_t = am.mass_t;
        entry.mass_s = am.mass_s;
        trace->entries.push_back(std::move(entry));
    }
    return substitute;
}

} // namespace refir
