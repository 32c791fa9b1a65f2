#include "kernels_impl.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <cmath>
#include <cstring>
#include <immintrin.h>

namespace refir::kernels::detail {

namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_hadd_ps(s, s);
    s = _mm_hadd_ps(s, s);
    return _mm_cvtss_f32(s);
}

inline float hmax256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 m = _mm_max_ps(lo, hi);
    m = _mm_max_ps(m, _mm_movehl_ps(m, m));
    m = _mm_max_ss(m, _mm_shuffle_ps(m, m, 1));
    return _mm_cvtss_f32(m);
}

// Cephes-style exp, same polynomial the usual avx_mathfun variants use.
inline __m256 exp256(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949f);
    const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
    const __m256 one = _mm256_set1_ps(1.0f);

    x = _mm256_min_ps(x, hi);
    x = _mm256_max_ps(x, lo);

    __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
    fx = _mm256_floor_ps(fx);
    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);

    __m256 z = _mm256_mul_ps(x, x);
    __m256 y = _mm256_set1_ps(1.9875691500e-4f);
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
    y = _mm256_fmadd_ps(y, z, x);
    y = _mm256_add_ps(y, one);

    __m256i n = _mm256_cvttps_epi32(fx);
    n = _mm256_add_epi32(n, _mm256_set1_epi32(0x7f));
    n = _mm256_slli_epi32(n, 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

float v_dot(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float r = hsum256(acc);
    for (; i < n; ++i)
        r += a[i] * b[i];
    return r;
}

float v_sum(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float r = hsum256(acc);
    for (; i < n; ++i)
        r += x[i];
    return r;
}

float v_sumsq(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float r = hsum256(acc);
    for (; i < n; ++i)
        r += x[i] * x[i];
    return r;
}

float v_max_val(const float* x, std::size_t n) {
    float r = -HUGE_VALF;
    std::size_t i = 0;
    if (n >= 8) {
        __m256 m = _mm256_loadu_ps(x);
        for (i = 8; i + 8 <= n; i += 8)
            m = _mm256_max_ps(m, _mm256_loadu_ps(x + i));
        r = hmax256(m);
    }
    for (; i < n; ++i)
        r = r < x[i] ? x[i] : r;
    return r;
}

float v_sqdiff_sum(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        acc = _mm256_fmadd_ps(d, d, acc);
    }
    float r = hsum256(acc);
    for (; i < n; ++i) {
        float d = a[i] - b[i];
        r += d * d;
    }
    return r;
}

void v_axpy(float a, const float* x, float* y, std::size_t n) {
    __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i)
        y[i] += a * x[i];
}

void v_scale(float* x, std::size_t n, float a) {
    __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i)
        x[i] *= a;
}

void v_vadd(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i)
        out[i] = a[i] + b[i];
}

void v_vmul(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i)
        out[i] = a[i] * b[i];
}

void v_vmadd(const float* a, const float* b, float* acc, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(acc + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                                  _mm256_loadu_ps(acc + i)));
    for (; i < n; ++i)
        acc[i] += a[i] * b[i];
}

void v_affine(const float* x, float* out, std::size_t n, float scale, float shift) {
    __m256 vs = _mm256_set1_ps(scale);
    __m256 vb = _mm256_set1_ps(shift);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_fmadd_ps(_mm256_loadu_ps(x + i), vs, vb));
    for (; i < n; ++i)
        out[i] = x[i] * scale + shift;
}

void v_blend2(const float* a, const float* b, const float* w, float* out, std::size_t n) {
    __m256 one = _mm256_set1_ps(1.f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vw = _mm256_loadu_ps(w + i);
        __m256 va = _mm256_mul_ps(_mm256_sub_ps(one, vw), _mm256_loadu_ps(a + i));
        _mm256_storeu_ps(out + i, _mm256_fmadd_ps(vw, _mm256_loadu_ps(b + i), va));
    }
    for (; i < n; ++i)
        out[i] = (1.f - w[i]) * a[i] + w[i] * b[i];
}

void v_exp_inplace(float* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, exp256(_mm256_loadu_ps(x + i)));
    if (i < n) {
        float buf[8];
        std::size_t rem = n - i;
        std::memcpy(buf, x + i, rem * sizeof(float));
        for (std::size_t j = rem; j < 8; ++j)
            buf[j] = 0.f;
        _mm256_storeu_ps(buf, exp256(_mm256_loadu_ps(buf)));
        std::memcpy(x + i, buf, rem * sizeof(float));
    }
}

void v_silu(const float* x, float* out, std::size_t n) {
    __m256 one = _mm256_set1_ps(1.f);
    __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        __m256 e = exp256(_mm256_sub_ps(zero, v));
        _mm256_storeu_ps(out + i, _mm256_div_ps(v, _mm256_add_ps(one, e)));
    }
    for (; i < n; ++i) {
        float buf[8] = {x[i]};
        __m256 e = exp256(_mm256_sub_ps(zero, _mm256_loadu_ps(buf)));
        float eb[8];
        _mm256_storeu_ps(eb, e);
        out[i] = x[i] / (1.f + eb[0]);
    }
}

void v_gemm_block(const float* A, const float* B, float* C, int M, int N, int K, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        float* c = C + static_cast<std::size_t>(i) * N;
        if (!accumulate)
            std::memset(c, 0, sizeof(float) * N);
        const float* a = A + static_cast<std::size_t>(i) * K;
        int k = 0;
        for (; k + 4 <= K; k += 4) {
            __m256 a0 = _mm256_set1_ps(a[k]);
            __m256 a1 = _mm256_set1_ps(a[k + 1]);
            __m256 a2 = _mm256_set1_ps(a[k + 2]);
            __m256 a3 = _mm256_set1_ps(a[k + 3]);
            const float* b0 = B + static_cast<std::size_t>(k) * N;
            const float* b1 = b0 + N;
            const float* b2 = b1 + N;
            const float* b3 = b2 + N;
            int j = 0;
            for (; j + 8 <= N; j += 8) {
                __m256 acc = _mm256_loadu_ps(c + j);
                acc = _mm256_fmadd_ps(a0, _mm256_loadu_ps(b0 + j), acc);
                acc = _mm256_fmadd_ps(a1, _mm256_loadu_ps(b1 + j), acc);
                acc = _mm256_fmadd_ps(a2, _mm256_loadu_ps(b2 + j), acc);
                acc = _mm256_fmadd_ps(a3, _mm256_loadu_ps(b3 + j), acc);
                _mm256_storeu_ps(c + j, acc);
            }
            for (; j < N; ++j)
                c[j] += a[k] * b0[j] + a[k + 1] * b1[j] + a[k + 2] * b2[j] + a[k + 3] * b3[j];
        }
        for (; k < K; ++k) {
            __m256 av = _mm256_set1_ps(a[k]);
            const float* b = B + static_cast<std::size_t>(k) * N;
            int j = 0;
            for (; j + 8 <= N; j += 8)
                _mm256_storeu_ps(c + j,
                                 _mm256_fmadd_ps(av, _mm256_loadu_ps(b + j), _mm256_loadu_ps(c + j)));
            for (; j < N; ++j)
                c[j] += a[k] * b[j];
        }
    }
}

void v_gemm_nt_block(const float* A, const float* B, float* C, int M, int N, int K,
                     bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + static_cast<std::size_t>(i) * K;
        float* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            float v = v_dot(a, B + static_cast<std::size_t>(j) * K, K);
            c[j] = accumulate ? c[j] + v : v;
        }
    }
}

} // namespace

const KernelOps* avx2_ops() {
    static const KernelOps ops = {
        v_dot,    v_sum,    v_sumsq,       v_max_val, v_sqdiff_sum,  v_axpy,
        v_scale,  v_vadd,   v_vmul,        v_vmadd,   v_affine,      v_blend2,
        v_exp_inplace, v_silu, v_gemm_block, v_gemm_nt_block,
    };
    return &ops;
}

} // namespace refir::kernels::detail

#else

namespace refir::kernels::detail {

const KernelOps* avx2_ops() {
    return nullptr;
}

} // namespace refir::kernels::detail

#endif
