#include "refir/unet.hpp"
#include "refir/errors.hpp"
#include "refir/kernels.hpp"
#include "refir/rng.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

namespace refir {

namespace {

void transpose(const float* src, float* dst, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

struct Conv2d {
    Param w, b;
    int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;

    // caches
    std::vector<float> cols;
    const Tensor* x_cache = nullptr;
    Tensor x_copy;
    int oh = 0, ow = 0;

    void init(const std::string& name, int ic, int oc, int ksize, int stride_, Rng& rng,
              bool zero_init = false) {
        in_c = ic;
        out_c = oc;
        k = ksize;
        stride = stride_;
        pad = ksize / 2;
        w.name = name + ".w";
        w.shape = {oc, ic, k, k};
        w.v.resize(static_cast<std::size_t>(oc) * ic * k * k);
        w.g.assign(w.v.size(), 0.f);
        b.name = name + ".b";
        b.shape = {oc};
        b.v.assign(oc, 0.f);
        b.g.assign(oc, 0.f);
        if (zero_init) {
            std::fill(w.v.begin(), w.v.end(), 0.f);
        } else {
            float std = std::sqrt(2.f / (static_cast<float>(ic) * k * k));
            rng.fill_normal(w.v.data(), w.v.size(), 0.f, std);
        }
    }

    bool is_identity_cols() const { return k == 1 && stride == 1; }

    void im2col(const Tensor& x) {
        int K = in_c * k * k;
        std::size_t N = static_cast<std::size_t>(oh) * ow;
        cols.assign(static_cast<std::size_t>(K) * N, 0.f);
        for (int ci = 0; ci < in_c; ++ci) {
            const float* plane = x.plane(ci);
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    float* row = cols.data() + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * N;
                    for (int y = 0; y < oh; ++y) {
                        int iy = y * stride - pad + ky;
                        if (iy < 0 || iy >= x.h)
                            continue;
                        const float* src = plane + static_cast<std::size_t>(iy) * x.w;
                        float* dst = row + static_cast<std::size_t>(y) * ow;
                        for (int xo = 0; xo < ow; ++xo) {
                            int ix = xo * stride - pad + kx;
                            if (ix >= 0 && ix < x.w)
                                dst[xo] = src[ix];
                        }
                    }
                }
            }
        }
    }

    Tensor forward(const Tensor& x) {
        if (x.c != in_c)
            throw Error(ErrorCode::Dimension, w.name + ": channel mismatch");
        oh = (x.h + 2 * pad - k) / stride + 1;
        ow = (x.w + 2 * pad - k) / stride + 1;
        Tensor y(out_c, oh, ow);
        std::size_t N = static_cast<std::size_t>(oh) * ow;
        const float* colptr;
        if (is_identity_cols()) {
            x_copy = x; // keep alive for backward
            colptr = x_copy.data.data();
        } else {
            im2col(x);
            x_copy = x;
            colptr = cols.data();
        }
        kernels::gemm(w.v.data(), colptr, y.data.data(), out_c, static_cast<int>(N), in_c * k * k,
                      false);
        for (int oc = 0; oc < out_c; ++oc) {
            float* plane = y.plane(oc);
            float bias = b.v[oc];
            for (std::size_t i = 0; i < N; ++i)
                plane[i] += bias;
        }
        return y;
    }

    Tensor backward(const Tensor& gy) {
        int K = in_c * k * k;
        int N = oh * ow;
        const float* colptr = is_identity_cols() ? x_copy.data.data() : cols.data();
        // dW += gy * cols^T
        std::vector<float> gw(w.v.size());
        kernels::gemm_nt(gy.data.data(), colptr, gw.data(), out_c, K, N, false);
        kernels::vadd(gw.data(), w.g.data(), w.g.data(), gw.size());
        for (int oc = 0; oc < out_c; ++oc)
            b.g[oc] += kernels::sum(gy.plane(oc), static_cast<std::size_t>(N));
        // gcols = W^T * gy
        std::vector<float> wt(w.v.size());
        transpose(w.v.data(), wt.data(), out_c, K);
        Tensor gx(in_c, x_copy.h, x_copy.w);
        if (is_identity_cols()) {
            kernels::gemm(wt.data(), gy.data.data(), gx.data.data(), K, N, out_c, false);
        } else {
            std::vector<float> gcols(static_cast<std::size_t>(K) * N);
            kernels::gemm(wt.data(), gy.data.data(), gcols.data(), K, N, out_c, false);
            // col2im scatter-add
            for (int ci = 0; ci < in_c; ++ci) {
                float* plane = gx.plane(ci);
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const float* row =
                            gcols.data() + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) *
                                               static_cast<std::size_t>(N);
                        for (int y = 0; y < oh; ++y) {
                            int iy = y * stride - pad + ky;
                            if (iy < 0 || iy >= gx.h)
                                continue;
                            float* dst = plane + static_cast<std::size_t>(iy) * gx.w;
                            const float* src = row + static_cast<std::size_t>(y) * ow;
                            for (int xo = 0; xo < ow; ++xo) {
                                int ix = xo * stride - pad + kx;
                                if (ix >= 0 && ix < gx.w)
                                    dst[ix] += src[xo];
                            }
                        }
                    }
                }
            }
        }
        return gx;
    }
};

struct GroupNorm {
    Param gamma, beta;
    int channels = 0, groups = 1;
    static constexpr float eps = 1e-5f;

    Tensor xhat;
    std::vector<float> invstd; // per group

    void init(const std::string& name, int c) {
        channels = c;
        groups = 1;
        for (int g : {8, 4, 2}) {
            if (c % g == 0 && c / g >= 2) {
                groups = g;
                break;
            }
        }
        gamma.name = name + ".g";
        gamma.shape = {c};
        gamma.v.assign(c, 1.f);
        gamma.g.assign(c, 0.f);
        beta.name = name + ".b";
        beta.shape = {c};
        beta.v.assign(c, 0.f);
        beta.g.assign(c, 0.f);
    }

    Tensor forward(const Tensor& x) {
        int cpg = channels / groups;
        std::size_t plane_n = static_cast<std::size_t>(x.h) * x.w;
        std::size_t m = plane_n * cpg;
        xhat = Tensor(x.c, x.h, x.w);
        invstd.assign(groups, 0.f);
        Tensor y(x.c, x.h, x.w);
        for (int g = 0; g < groups; ++g) {
            const float* base = x.plane(g * cpg);
            float mean = kernels::sum(base, m) / static_cast<float>(m);
            float var = kernels::sumsq(base, m) / static_cast<float>(m) - mean * mean;
            float is = 1.f / std::sqrt(std::max(var, 0.f) + eps);
            invstd[g] = is;
            float* xh = xhat.plane(g * cpg);
            kernels::affine(base, xh, m, is, -mean * is);
            for (int c = 0; c < cpg; ++c) {
                int ci = g * cpg + c;
                kernels::affine(xhat.plane(ci), y.plane(ci), plane_n, gamma.v[ci], beta.v[ci]);
            }
        }
        return y;
    }

    Tensor backward(const Tensor& gy) {
        int cpg = channels / groups;
        std::size_t plane_n = static_cast<std::size_t>(gy.h) * gy.w;
        std::size_t m = plane_n * cpg;
        Tensor gx(gy.c, gy.h, gy.w);
        std::vector<float> gxhat(m);
        for (int g = 0; g < groups; ++g) {
            for (int c = 0; c < cpg; ++c) {
                int ci = g * cpg + c;
                const float* gyp = gy.plane(ci);
                const float* xhp = xhat.plane(ci);
                gamma.g[ci] += kernels::dot(gyp, xhp, plane_n);
                beta.g[ci] += kernels::sum(gyp, plane_n);
                kernels::affine(gyp, gxhat.data() + static_cast<std::size_t>(c) * plane_n, plane_n,
                                gamma.v[ci], 0.f);
            }
            const float* xh = xhat.plane(g * cpg);
            float sum_g = kernels::sum(gxhat.data(), m);
            float sum_gx = kernels::dot(gxhat.data(), xh, m);
            float is = invstd[g];
            float inv_m = 1.f / static_cast<float>(m);
            float* gxp = gx.plane(g * cpg);
            for (std::size_t i = 0; i < m; ++i)
                gxp[i] = is * (gxhat[i] - inv_m * sum_g - xh[i] * inv_m * sum_gx);
        }
        return gx;
    }
};

struct SiLU {
    std::vector<float> x_cache, sig_cache;

    void apply(const float* x, float* y, std::size_t n) {
        x_cache.assign(x, x + n);
        sig_cache.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            sig_cache[i] = 1.f / (1.f + std::exp(-x[i]));
        kernels::vmul(x, sig_cache.data(), y, n);
    }

    Tensor forward(const Tensor& x) {
        Tensor y(x.c, x.h, x.w);
        apply(x.data.data(), y.data.data(), x.size());
        return y;
    }

    void backward_inplace(float* gy, std::size_t n) const {
        for (std::size_t i = 0; i < n; ++i) {
            float s = sig_cache[i];
            gy[i] *= s * (1.f + x_cache[i] * (1.f - s));
        }
    }

    Tensor backward(const Tensor& gy) const {
        Tensor gx = gy;
        backward_inplace(gx.data.data(), gx.size());
        return gx;
    }
};

struct Linear {
    Param w, b;
    int in_dim = 0, out_dim = 0;
    std::vector<float> x_cache;

    void init(const std::string& name, int in, int out, Rng& rng) {
        in_dim = in;
        out_dim = out;
        w.name = name + ".w";
        w.shape = {out, in};
        w.v.resize(static_cast<std::size_t>(out) * in);
        w.g.assign(w.v.size(), 0.f);
        rng.fill_normal(w.v.data(), w.v.size(), 0.f, std::sqrt(1.f / in));
        b.name = name + ".b";
        b.shape = {out};
        b.v.assign(out, 0.f);
        b.g.assign(out, 0.f);
    }

    std::vector<float> forward(const std::vector<float>& x) {
        x_cache = x;
        std::vector<float> y(out_dim);
        for (int o = 0; o < out_dim; ++o)
            y[o] = kernels::dot(w.v.data() + static_cast<std::size_t>(o) * in_dim, x.data(),
                                in_dim) +
                   b.v[o];
        return y;
    }

    std::vector<float> backward(const std::vector<float>& gy) {
        std::vector<float> gx(in_dim, 0.f);
        for (int o = 0; o < out_dim; ++o) {
            kernels::axpy(gy[o], x_cache.data(), w.g.data() + static_cast<std::size_t>(o) * in_dim,
                          in_dim);
            b.g[o] += gy[o];
            kernels::axpy(gy[o], w.v.data() + static_cast<std::size_t>(o) * in_dim, gx.data(),
                          in_dim);
        }
        return gx;
    }
};

struct ResBlock {
    GroupNorm gn1, gn2;
    SiLU act1, act2;
    Conv2d conv1, conv2;
    Linear time_proj;
    Conv2d shortcut; // 1x1 when in_c != out_c
    bool has_shortcut = false;
    int out_c = 0;
    Tensor h_cache;

    void init(const std::string& name, int ic, int oc, int temb_out, Rng& rng) {
        out_c = oc;
        gn1.init(name + ".gn1", ic);
        conv1.init(name + ".conv1", ic, oc, 3, 1, rng);
        time_proj.init(name + ".tproj", temb_out, oc, rng);
        gn2.init(name + ".gn2", oc);
        conv2.init(name + ".conv2", oc, oc, 3, 1, rng);
        has_shortcut = ic != oc;
        if (has_shortcut)
            shortcut.init(name + ".skip", ic, oc, 1, 1, rng);
    }

    Tensor forward(const Tensor& x, const std::vector<float>& temb_act) {
        Tensor h = conv1.forward(act1.forward(gn1.forward(x)));
        std::vector<float> tp = time_proj.forward(temb_act);
        std::size_t plane_n = static_cast<std::size_t>(h.h) * h.w;
        for (int c = 0; c < out_c; ++c) {
            float* plane = h.plane(c);
            for (std::size_t i = 0; i < plane_n; ++i)
                plane[i] += tp[c];
        }
        h_cache = h;
        Tensor y = conv2.forward(act2.forward(gn2.forward(h)));
        Tensor sc = has_shortcut ? shortcut.forward(x) : x;
        kernels::vadd(y.data.data(), sc.data.data(), y.data.data(), y.size());
        return y;
    }

    Tensor backward(const Tensor& gy, std::vector<float>& gtemb_act) {
        Tensor gsc = gy;
        Tensor gh = gn2.backward(act2.backward(conv2.backward(gy)));
        std::vector<float> gtp(out_c);
        std::size_t plane_n = static_cast<std::size_t>(gh.h) * gh.w;
        for (int c = 0; c < out_c; ++c)
            gtp[c] = kernels::sum(gh.plane(c), plane_n);
        std::vector<float> gt = time_proj.backward(gtp);
        kernels::vadd(gt.data(), gtemb_act.data(), gtemb_act.data(), gt.size());
        Tensor gx = gn1.backward(act1.backward(conv1.backward(gh)));
        if (has_shortcut) {
            Tensor g2 = shortcut.backward(gsc);
            kernels::vadd(gx.data.data(), g2.data.data(), gx.data.data(), gx.size());
        } else {
            kernels::vadd(gx.data.data(), gsc.data.data(), gx.data.data(), gx.size());
        }
        return gx;
    }
};

struct AttnBlock {
    GroupNorm gn;
    Conv2d qkv, proj;
    int channels = 0, heads = 0, head_dim = 0;
    std::string site_id;

    // caches
    Tensor x_cache;
    AttnTensors at;
    std::vector<float> probs; // [heads][N][N]
    bool substituted = false;

    void init(const std::string& name, const std::string& site, int c, int h, Rng& rng) {
        if (c % h != 0)
            throw Error(ErrorCode::Usage, "attention heads must divide channels");
        channels = c;
        heads = h;
        head_dim = c / h;
        site_id = site;
        gn.init(name + ".gn", c);
        qkv.init(name + ".qkv", c, 3 * c, 1, 1, rng);
        proj.init(name + ".proj", c, c, 1, 1, rng);
    }

    void gather_head(const Tensor& planes, int plane_offset, std::vector<float>& dst) {
        int n = planes.h * planes.w;
        dst.resize(static_cast<std::size_t>(heads) * n * head_dim);
        for (int h = 0; h < heads; ++h)
            for (int d = 0; d < head_dim; ++d) {
                const float* src = planes.plane(plane_offset + h * head_dim + d);
                float* out = dst.data() + (static_cast<std::size_t>(h) * n) * head_dim + d;
                for (int i = 0; i < n; ++i)
                    out[static_cast<std::size_t>(i) * head_dim] = src[i];
            }
    }

    void scatter_head(const std::vector<float>& src, Tensor& planes, int plane_offset) const {
        int n = planes.h * planes.w;
        for (int h = 0; h < heads; ++h)
            for (int d = 0; d < head_dim; ++d) {
                float* dst = planes.plane(plane_offset + h * head_dim + d);
                const float* in = src.data() + (static_cast<std::size_t>(h) * n) * head_dim + d;
                for (int i = 0; i < n; ++i)
                    dst[i] = in[static_cast<std::size_t>(i) * head_dim];
            }
    }

    Tensor forward(const Tensor& x, int t, const AttentionHook& hook) {
        x_cache = x;
        Tensor normed = gn.forward(x);
        Tensor qkv_planes = qkv.forward(normed);
        int n = x.h * x.w;
        at.heads = heads;
        at.tokens = n;
        at.head_dim = head_dim;
        gather_head(qkv_planes, 0, at.q);
        gather_head(qkv_planes, channels, at.k);
        gather_head(qkv_planes, 2 * channels, at.v);

        float scale = 1.f / std::sqrt(static_cast<float>(head_dim));
        probs.resize(static_cast<std::size_t>(heads) * n * n);
        at.out.resize(at.total());
        for (int h = 0; h < heads; ++h) {
            const float* Q = at.q.data() + static_cast<std::size_t>(h) * n * head_dim;
            const float* K = at.k.data() + static_cast<std::size_t>(h) * n * head_dim;
            const float* V = at.v.data() + static_cast<std::size_t>(h) * n * head_dim;
            float* P = probs.data() + static_cast<std::size_t>(h) * n * n;
            float* O = at.out.data() + static_cast<std::size_t>(h) * n * head_dim;
            kernels::gemm_nt(Q, K, P, n, n, head_dim, false);
            kernels::scale(P, static_cast<std::size_t>(n) * n, scale);
            for (int r = 0; r < n; ++r)
                kernels::softmax_row(P + static_cast<std::size_t>(r) * n, n);
            kernels::gemm(P, V, O, n, head_dim, n, false);
        }

        const std::vector<float>* effective = &at.out;
        std::vector<float> sub_storage;
        substituted = false;
        if (hook) {
            SiteContext ctx{site_id, t, &at, &x_cache};
            auto sub = hook(ctx);
            if (sub.has_value()) {
                if (sub->size() != at.total())
                    throw Error(ErrorCode::Dimension,
                                "hook substitute at site " + site_id + " has wrong shape");
                sub_storage = std::move(*sub);
                effective = &sub_storage;
                substituted = true;
            }
        }

        Tensor o_img(channels, x.h, x.w);
        scatter_head(*effective, o_img, 0);
        Tensor y = proj.forward(o_img);
        kernels::vadd(y.data.data(), x.data.data(), y.data.data(), y.size());
        return y;
    }

    Tensor backward(const Tensor& gy) {
        assert(!substituted && "cannot backprop through a substituted attention output");
        int n = x_cache.h * x_cache.w;
        Tensor go_img = proj.backward(gy);
        std::vector<float> go(at.total());
        for (int h = 0; h < heads; ++h)
            for (int d = 0; d < head_dim; ++d) {
                const float* src = go_img.plane(h * head_dim + d);
                float* out = go.data() + (static_cast<std::size_t>(h) * n) * head_dim + d;
                for (int i = 0; i < n; ++i)
                    out[static_cast<std::size_t>(i) * head_dim] = src[i];
            }

        float scale = 1.f / std::sqrt(static_cast<float>(head_dim));
        std::vector<float> gq(at.total()), gk(at.total()), gv(at.total());
        std::vector<float> gp(static_cast<std::size_t>(n) * n), gs(static_cast<std::size_t>(n) * n);
        std::vector<float> scratch(static_cast<std::size_t>(n) * n);
        for (int h = 0; h < heads; ++h) {
            std::size_t ho = static_cast<std::size_t>(h) * n * head_dim;
            const float* Q = at.q.data() + ho;
            const float* K = at.k.data() + ho;
            const float* V = at.v.data() + ho;
            const float* P = probs.data() + static_cast<std::size_t>(h) * n * n;
            const float* gO = go.data() + ho;
            // gP = gO V^T ; gV = P^T gO
            kernels::gemm_nt(gO, V, gp.data(), n, n, head_dim, false);
            transpose(P, scratch.data(), n, n);
            kernels::gemm(scratch.data(), gO, gv.data() + ho, n, head_dim, n, false);
            // softmax backward
            for (int r = 0; r < n; ++r) {
                const float* pr = P + static_cast<std::size_t>(r) * n;
                const float* gpr = gp.data() + static_cast<std::size_t>(r) * n;
                float* gsr = gs.data() + static_cast<std::size_t>(r) * n;
                float d = kernels::dot(gpr, pr, n);
                for (int j = 0; j < n; ++j)
                    gsr[j] = pr[j] * (gpr[j] - d);
            }
            kernels::scale(gs.data(), static_cast<std::size_t>(n) * n, scale);
            // gQ = gS K ; gK = gS^T Q
            kernels::gemm(gs.data(), K, gq.data() + ho, n, head_dim, n, false);
            transpose(gs.data(), scratch.data(), n, n);
            kernels::gemm(scratch.data(), Q, gk.data() + ho, n, head_dim, n, false);
        }

        Tensor gqkv(3 * channels, x_cache.h, x_cache.w);
        scatter_head(gq, gqkv, 0);
        scatter_head(gk, gqkv, channels);
        scatter_head(gv, gqkv, 2 * channels);
        Tensor gnormed = qkv.backward(gqkv);
        Tensor gx = gn.backward(gnormed);
        kernels::vadd(gx.data.data(), gy.data.data(), gx.data.data(), gx.size());
        return gx;
    }
};

struct Upsample {
    Conv2d conv;
    int in_h = 0, in_w = 0;

    void init(const std::string& name, int ic, int oc, Rng& rng) {
        conv.init(name + ".conv", ic, oc, 3, 1, rng);
    }

    Tensor forward(const Tensor& x) {
        in_h = x.h;
        in_w = x.w;
        Tensor up(x.c, x.h * 2, x.w * 2);
        for (int c = 0; c < x.c; ++c) {
            const float* src = x.plane(c);
            float* dst = up.plane(c);
            for (int y = 0; y < x.h; ++y)
                for (int xo = 0; xo < x.w; ++xo) {
                    float v = src[static_cast<std::size_t>(y) * x.w + xo];
                    std::size_t base = (static_cast<std::size_t>(y) * 2) * up.w + xo * 2;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + up.w] = v;
                    dst[base + up.w + 1] = v;
                }
        }
        return conv.forward(up);
    }

    Tensor backward(const Tensor& gy) {
        Tensor gup = conv.backward(gy);
        Tensor gx(gup.c, in_h, in_w);
        for (int c = 0; c < gup.c; ++c) {
            const float* src = gup.plane(c);
            float* dst = gx.plane(c);
            for (int y = 0; y < in_h; ++y)
                for (int xo = 0; xo < in_w; ++xo) {
                    std::size_t base = (static_cast<std::size_t>(y) * 2) * gup.w + xo * 2;
                    dst[static_cast<std::size_t>(y) * in_w + xo] =
                        src[base] + src[base + 1] + src[base + gup.w] + src[base + gup.w + 1];
                }
        }
        return gx;
    }
};

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor out(a.c + b.c, a.h, a.w);
    std::memcpy(out.data.data(), a.data.data(), a.size() * sizeof(float));
    std::memcpy(out.data.data() + a.size(), b.data.data(), b.size() * sizeof(float));
    return out;
}

void split_channels(const Tensor& g, int c_a, Tensor& ga, Tensor& gb) {
    ga = Tensor(c_a, g.h, g.w);
    gb = Tensor(g.c - c_a, g.h, g.w);
    std::memcpy(ga.data.data(), g.data.data(), ga.size() * sizeof(float));
    std::memcpy(gb.data.data(), g.data.data() + ga.size(), gb.size() * sizeof(float));
}

std::vector<float> sinusoidal_embedding(int t, int dim) {
    std::vector<float> emb(dim);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / half);
        emb[i] = static_cast<float>(std::sin(t * freq));
        emb[half + i] = static_cast<float>(std::cos(t * freq));
    }
    return emb;
}

} // namespace

struct UNet::Impl {
    UNetConfig cfg;
    int temb_out = 0;

    Linear temb1, temb2;
    SiLU temb_act1, temb_act2;
    std::vector<float> temb_act; // silu(temb), consumed by resblocks

    Conv2d stem;
    Conv2d down1, down2, down3;
    ResBlock res1, res2, res3, mid;
    AttnBlock attn_e2, attn_e3;

    ResBlock dres3, dres2, dres1, dres0;
    AttnBlock attn_d3, attn_d2;
    Upsample up3, up2, up1;
    GroupNorm out_gn;
    SiLU out_act;
    Conv2d out_conv;

    Conv2d c_stem, c_hint;
    Conv2d c_down1, c_down2, c_down3;
    ResBlock c_res1, c_res2, c_res3, c_mid;
    AttnBlock c_attn2, c_attn3;
    Conv2d proj0, proj1, proj2, proj3, proj_m;

    // forward caches for the top-level wiring
    bool cond_used = false;
    Tensor cat3_in, cat2_in, cat1_in, cat0_in;
    int widths0, widths1, widths2, widths3;

    std::vector<Param*> params;

    explicit Impl(const UNetConfig& c, std::uint64_t seed) : cfg(c) {
        Rng rng(seed);
        temb_out = 2 * cfg.temb_dim;
        auto [w0, w1, w2, w3] = cfg.widths;
        widths0 = w0;
        widths1 = w1;
        widths2 = w2;
        widths3 = w3;

        temb1.init("temb.l1", cfg.temb_dim, temb_out, rng);
        temb2.init("temb.l2", temb_out, temb_out, rng);

        stem.init("stem", cfg.io_channels, w0, 3, 1, rng);
        down1.init("down1", w0, w1, 3, 2, rng);
        res1.init("res1", w1, w1, temb_out, rng);
        down2.init("down2", w1, w2, 3, 2, rng);
        res2.init("res2", w2, w2, temb_out, rng);
        attn_e2.init("attn_e2", "enc.4", w2, cfg.heads, rng);
        down3.init("down3", w2, w3, 3, 2, rng);
        res3.init("res3", w3, w3, temb_out, rng);
        attn_e3.init("attn_e3", "enc.8", w3, cfg.heads, rng);
        mid.init("mid", w3, w3, temb_out, rng);

        dres3.init("dres3", 2 * w3, w3, temb_out, rng);
        attn_d3.init("attn_d3", "dec.8", w3, cfg.heads, rng);
        up3.init("up3", w3, w2, rng);
        dres2.init("dres2", 2 * w2, w2, temb_out, rng);
        attn_d2.init("attn_d2", "dec.4", w2, cfg.heads, rng);
        up2.init("up2", w2, w1, rng);
        dres1.init("dres1", 2 * w1, w1, temb_out, rng);
        up1.init("up1", w1, w0, rng);
        dres0.init("dres0", 2 * w0, w0, temb_out, rng);
        out_gn.init("out.gn", w0);
        out_conv.init("out.conv", w0, cfg.io_channels, 3, 1, rng);

        c_stem.init("cond.stem", cfg.io_channels, w0, 3, 1, rng);
        c_hint.init("cond.hint", cfg.io_channels, w0, 3, 1, rng);
        c_down1.init("cond.down1", w0, w1, 3, 2, rng);
        c_res1.init("cond.res1", w1, w1, temb_out, rng);
        c_down2.init("cond.down2", w1, w2, 3, 2, rng);
        c_res2.init("cond.res2", w2, w2, temb_out, rng);
        c_attn2.init("cond.attn2", "cond.4", w2, cfg.heads, rng);
        c_down3.init("cond.down3", w2, w3, 3, 2, rng);
        c_res3.init("cond.res3", w3, w3, temb_out, rng);
        c_attn3.init("cond.attn3", "cond.8", w3, cfg.heads, rng);
        c_mid.init("cond.mid", w3, w3, temb_out, rng);
        // zero-initialized fusion projections: the branch is a no-op until trained
        proj0.init("cond.proj0", w0, w0, 1, 1, rng, true);
        proj1.init("cond.proj1", w1, w1, 1, 1, rng, true);
        proj2.init("cond.proj2", w2, w2, 1, 1, rng, true);
        proj3.init("cond.proj3", w3, w3, 1, 1, rng, true);
        proj_m.init("cond.projm", w3, w3, 1, 1, rng, true);

        collect_params();
    }

    void add_conv(Conv2d& c) {
        params.push_back(&c.w);
        params.push_back(&c.b);
    }
    void add_gn(GroupNorm& g) {
        params.push_back(&g.gamma);
        params.push_back(&g.beta);
    }
    void add_lin(Linear& l) {
        params.push_back(&l.w);
        params.push_back(&l.b);
    }
    void add_res(ResBlock& r) {
        add_gn(r.gn1);
        add_conv(r.conv1);
        add_lin(r.time_proj);
        add_gn(r.gn2);
        add_conv(r.conv2);
        if (r.has_shortcut)
            add_conv(r.shortcut);
    }
    void add_attn(AttnBlock& a) {
        add_gn(a.gn);
        add_conv(a.qkv);
        add_conv(a.proj);
    }

    void collect_params() {
        add_lin(temb1);
        add_lin(temb2);
        add_conv(stem);
        add_conv(down1);
        add_res(res1);
        add_conv(down2);
        add_res(res2);
        add_attn(attn_e2);
        add_conv(down3);
        add_res(res3);
        add_attn(attn_e3);
        add_res(mid);
        add_res(dres3);
        add_attn(attn_d3);
        add_conv(up3.conv);
        add_res(dres2);
        add_attn(attn_d2);
        add_conv(up2.conv);
        add_res(dres1);
        add_conv(up1.conv);
        add_res(dres0);
        add_gn(out_gn);
        add_conv(out_conv);
        add_conv(c_stem);
        add_conv(c_hint);
        add_conv(c_down1);
        add_res(c_res1);
        add_conv(c_down2);
        add_res(c_res2);
        add_attn(c_attn2);
        add_conv(c_down3);
        add_res(c_res3);
        add_attn(c_attn3);
        add_res(c_mid);
        add_conv(proj0);
        add_conv(proj1);
        add_conv(proj2);
        add_conv(proj3);
        add_conv(proj_m);
    }

    Tensor forward(const Tensor& x, int t, const Tensor* cond, const AttentionHook& hook) {
        if (x.c != cfg.io_channels)
            throw Error(ErrorCode::Dimension, "latent channel count mismatch");
        if (x.h % 8 != 0 || x.w % 8 != 0)
            throw Error(ErrorCode::Dimension, "latent H and W must be divisible by 8");
        if (cond && (cond->c != cfg.io_channels || cond->h != x.h || cond->w != x.w))
            throw Error(ErrorCode::Dimension, "condition shape incompatible with latent");

        std::vector<float> se = sinusoidal_embedding(t, cfg.temb_dim);
        std::vector<float> h1 = temb1.forward(se);
        std::vector<float> h1a(h1.size());
        temb_act1.apply(h1.data(), h1a.data(), h1.size());
        std::vector<float> temb = temb2.forward(h1a);
        temb_act.resize(temb.size());
        temb_act2.apply(temb.data(), temb_act.data(), temb.size());

        cond_used = cond != nullptr;

        Tensor e0 = stem.forward(x);
        Tensor e1 = res1.forward(down1.forward(e0), temb_act);
        Tensor e2 = attn_e2.forward(res2.forward(down2.forward(e1), temb_act), t, hook);
        Tensor e3 = attn_e3.forward(res3.forward(down3.forward(e2), temb_act), t, hook);
        Tensor m = mid.forward(e3, temb_act);

        Tensor s0 = e0, s1 = e1, s2 = e2, s3 = e3;
        if (cond_used) {
            Tensor b0 = c_stem.forward(x);
            Tensor hint = c_hint.forward(*cond);
            kernels::vadd(b0.data.data(), hint.data.data(), b0.data.data(), b0.size());
            Tensor b1 = c_res1.forward(c_down1.forward(b0), temb_act);
            Tensor b2 = c_attn2.forward(c_res2.forward(c_down2.forward(b1), temb_act), t, hook);
            Tensor b3 = c_attn3.forward(c_res3.forward(c_down3.forward(b2), temb_act), t, hook);
            Tensor bm = c_mid.forward(b3, temb_act);

            auto fuse_in = [](Tensor& dst, Conv2d& proj, const Tensor& b) {
                Tensor p = proj.forward(b);
                kernels::vadd(dst.data.data(), p.data.data(), dst.data.data(), dst.size());
            };
            fuse_in(s0, proj0, b0);
            fuse_in(s1, proj1, b1);
            fuse_in(s2, proj2, b2);
            fuse_in(s3, proj3, b3);
            fuse_in(m, proj_m, bm);
        }

        cat3_in = concat_channels(m, s3);
        Tensor d3 = attn_d3.forward(dres3.forward(cat3_in, temb_act), t, hook);
        cat2_in = concat_channels(up3.forward(d3), s2);
        Tensor d2 = attn_d2.forward(dres2.forward(cat2_in, temb_act), t, hook);
        cat1_in = concat_channels(up2.forward(d2), s1);
        Tensor d1 = dres1.forward(cat1_in, temb_act);
        cat0_in = concat_channels(up1.forward(d1), s0);
        Tensor d0 = dres0.forward(cat0_in, temb_act);
        return out_conv.forward(out_act.forward(out_gn.forward(d0)));
    }

    void backward(const Tensor& gout) {
        std::vector<float> gtemb_act(temb_out, 0.f);

        Tensor gd0 = out_gn.backward(out_act.backward(out_conv.backward(gout)));
        Tensor gcat0 = dres0.backward(gd0, gtemb_act);
        Tensor gu0, gs0;
        split_channels(gcat0, widths0, gu0, gs0);
        Tensor gd1 = up1.backward(gu0);
        Tensor gcat1 = dres1.backward(gd1, gtemb_act);
        Tensor gu1, gs1;
        split_channels(gcat1, widths1, gu1, gs1);
        Tensor gd2 = up2.backward(gu1);
        Tensor gcat2 = dres2.backward(attn_d2.backward(gd2), gtemb_act);
        Tensor gu2, gs2;
        split_channels(gcat2, widths2, gu2, gs2);
        Tensor gd3 = up3.backward(gu2);
        Tensor gcat3 = dres3.backward(attn_d3.backward(gd3), gtemb_act);
        Tensor gm, gs3;
        split_channels(gcat3, widths3, gm, gs3);

        Tensor gb0, gb1, gb2, gb3, gbm;
        if (cond_used) {
            gbm = proj_m.backward(gm);
            gb3 = proj3.backward(gs3);
            gb2 = proj2.backward(gs2);
            gb1 = proj1.backward(gs1);
            gb0 = proj0.backward(gs0);
        }

        Tensor ge3 = mid.backward(gm, gtemb_act);
        kernels::vadd(ge3.data.data(), gs3.data.data(), ge3.data.data(), ge3.size());
        Tensor ge2 = down3.backward(res3.backward(attn_e3.backward(ge3), gtemb_act));
        kernels::vadd(ge2.data.data(), gs2.data.data(), ge2.data.data(), ge2.size());
        Tensor ge1 = down2.backward(res2.backward(attn_e2.backward(ge2), gtemb_act));
        kernels::vadd(ge1.data.data(), gs1.data.data(), ge1.data.data(), ge1.size());
        Tensor ge0 = down1.backward(res1.backward(ge1, gtemb_act));
        kernels::vadd(ge0.data.data(), gs0.data.data(), ge0.data.data(), ge0.size());
        stem.backward(ge0);

        if (cond_used) {
            Tensor gbm_in = c_mid.backward(gbm, gtemb_act);
            kernels::vadd(gb3.data.data(), gbm_in.data.data(), gb3.data.data(), gb3.size());
            Tensor gb2_in = c_down3.backward(c_res3.backward(c_attn3.backward(gb3), gtemb_act));
            kernels::vadd(gb2.data.data(), gb2_in.data.data(), gb2.data.data(), gb2.size());
            Tensor gb1_in = c_down2.backward(c_res2.backward(c_attn2.backward(gb2), gtemb_act));
            kernels::vadd(gb1.data.data(), gb1_in.data.data(), gb1.data.data(), gb1.size());
            Tensor gb0_in = c_down1.backward(c_res1.backward(gb1, gtemb_act));
            kernels::vadd(gb0.data.data(), gb0_in.data.data(), gb0.data.data(), gb0.size());
            c_stem.backward(gb0);
            c_hint.backward(gb0);
        }

        temb_act2.backward_inplace(gtemb_act.data(), gtemb_act.size());
        std::vector<float> gh1a = temb2.backward(gtemb_act);
        temb_act1.backward_inplace(gh1a.data(), gh1a.size());
        temb1.backward(gh1a);
    }
};

UNet::UNet(const UNetConfig& cfg, std::uint64_t seed) : impl_(std::make_unique<Impl>(cfg, seed)) {}
UNet::~UNet() = default;
UNet::UNet(UNet&&) noexcept = default;
UNet& UNet::operator=(UNet&&) noexcept = default;

const UNetConfig& UNet::config() const {
    return impl_->cfg;
}

std::vector<AttentionSite> UNet::attention_sites() const {
    int ns = impl_->cfg.native_size;
    return {
        {"enc.4", "encoder", 4, ns / 4},  {"enc.8", "encoder", 8, ns / 8},
        {"cond.4", "condition_branch", 4, ns / 4}, {"cond.8", "condition_branch", 8, ns / 8},
        {"dec.8", "decoder", 8, ns / 8},  {"dec.4", "decoder", 4, ns / 4},
    };
}

Tensor UNet::predict_noise(const Tensor& x, int t, const Tensor* cond, const AttentionHook& hook) {
    return impl_->forward(x, t, cond, hook);
}

void UNet::zero_grad() {
    for (Param* p : impl_->params)
        std::fill(p->g.begin(), p->g.end(), 0.f);
}

void UNet::backward(const Tensor& grad_out) {
    impl_->backward(grad_out);
}

std::vector<Param*> UNet::parameters() {
    return impl_->params;
}

AttentionHook make_capture_hook(StepCapture& capture, std::vector<std::string> sites) {
    return [&capture, sites = std::move(sites)](const SiteContext& ctx) -> std::optional<std::vector<float>> {
        if (sites.empty() ||
            std::find(sites.begin(), sites.end(), ctx.site_id) != sites.end()) {
            CapturedSite cs;
            cs.attn = *ctx.attn;
            cs.hidden = *ctx.hidden;
            capture[ctx.site_id] = std::move(cs);
        }
        return std::nullopt;
    };
}

AttentionHook chain_hooks(AttentionHook first, AttentionHook second) {
    return [first = std::move(first), second = std::move(second)](const SiteContext& ctx)
               -> std::optional<std::vector<float>> {
        if (first)
            first(ctx);
        if (second)
            return second(ctx);
        return std::nullopt;
    };
}

} // namespace refir
