#include "refir/kernels.hpp"
#include "kernels_impl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace refir::kernels {

namespace detail {

static float s_dot(const float* a, const float* b, std::size_t n) {
    float acc = 0.f;
    for (std::size_t i = 0; i < n; ++i)
        acc += a[i] * b[i];
    return acc;
}

static float s_sum(const float* x, std::size_t n) {
    float acc = 0.f;
    for (std::size_t i = 0; i < n; ++i)
        acc += x[i];
    return acc;
}

static float s_sumsq(const float* x, std::size_t n) {
    float acc = 0.f;
    for (std::size_t i = 0; i < n; ++i)
        acc += x[i] * x[i];
    return acc;
}

static float s_max_val(const float* x, std::size_t n) {
    float m = -HUGE_VALF;
    for (std::size_t i = 0; i < n; ++i)
        m = std::max(m, x[i]);
    return m;
}

static float s_sqdiff_sum(const float* a, const float* b, std::size_t n) {
    float acc = 0.f;
    for (std::size_t i = 0; i < n; ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

static void s_axpy(float a, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        y[i] += a * x[i];
}

static void s_scale(float* x, std::size_t n, float a) {
    for (std::size_t i = 0; i < n; ++i)
        x[i] *= a;
}

static void s_vadd(const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a[i] + b[i];
}

static void s_vmul(const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a[i] * b[i];
}

static void s_vmadd(const float* a, const float* b, float* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        acc[i] += a[i] * b[i];
}

static void s_affine(const float* x, float* out, std::size_t n, float scale, float shift) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = x[i] * scale + shift;
}

static void s_blend2(const float* a, const float* b, const float* w, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = (1.f - w[i]) * a[i] + w[i] * b[i];
}

static void s_exp_inplace(float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::exp(x[i]);
}

static void s_silu(const float* x, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = x[i] / (1.f + std::exp(-x[i]));
}

static void s_gemm_block(const float* A, const float* B, float* C, int M, int N, int K,
                         bool accumulate) {
    for (int i = 0; i < M; ++i) {
        float* c = C + static_cast<std::size_t>(i) * N;
        if (!accumulate)
            std::memset(c, 0, sizeof(float) * N);
        const float* a = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            float av = a[k];
            const float* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j)
                c[j] += av * b[j];
        }
    }
}

static void s_gemm_nt_block(const float* A, const float* B, float* C, int M, int N, int K,
                            bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + static_cast<std::size_t>(i) * K;
        float* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            float v = s_dot(a, B + static_cast<std::size_t>(j) * K, K);
            c[j] = accumulate ? c[j] + v : v;
        }
    }
}

const KernelOps* scalar_ops() {
    static const KernelOps ops = {
        s_dot,    s_sum,    s_sumsq,       s_max_val, s_sqdiff_sum,  s_axpy,
        s_scale,  s_vadd,   s_vmul,        s_vmadd,   s_affine,      s_blend2,
        s_exp_inplace, s_silu, s_gemm_block, s_gemm_nt_block,
    };
    return &ops;
}

} // namespace detail

namespace {

using detail::KernelOps;

struct Dispatch {
    const KernelOps* ops;
    Mode mode;
};

Dispatch resolve(Mode request) {
    const KernelOps* avx2 = detail::avx2_ops();
    bool have_avx2 = avx2 != nullptr && cpu_has_avx2();
    switch (request) {
    case Mode::Scalar:
        return {detail::scalar_ops(), Mode::Scalar};
    case Mode::Avx2:
        if (have_avx2)
            return {avx2, Mode::Avx2};
        return {nullptr, Mode::Scalar};
    case Mode::Auto:
    default:
        if (have_avx2)
            return {avx2, Mode::Avx2};
        return {detail::scalar_ops(), Mode::Scalar};
    }
}

Dispatch initial_dispatch() {
    Mode request = Mode::Auto;
    if (const char* env = std::getenv("REFIR_KERNELS")) {
        std::string v(env);
        if (v == "scalar")
            request = Mode::Scalar;
        else if (v == "avx2")
            request = Mode::Avx2;
    }
    Dispatch d = resolve(request);
    if (!d.ops)
        d = resolve(Mode::Auto);
    return d;
}

Dispatch& dispatch() {
    static Dispatch d = initial_dispatch();
    return d;
}

const KernelOps& ops() {
    return *dispatch().ops;
}

// Persistent worker pool for row-parallel GEMM. Jobs are indexed chunks,
// so the result does not depend on which thread runs which chunk.
class WorkerPool {
public:
    explicit WorkerPool(int extra_workers) {
        for (int i = 0; i < extra_workers; ++i)
            workers_.emplace_back([this] { worker(); });
    }

    ~WorkerPool() {
        {
            std::lock_guard lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : workers_)
            t.join();
    }

    void run(int jobs, const std::function<void(int)>& fn) {
        if (jobs <= 0)
            return;
        {
            std::lock_guard lk(m_);
            job_ = &fn;
            total_ = jobs;
            next_.store(0, std::memory_order_relaxed);
            pending_ = static_cast<int>(workers_.size());
            ++generation_;
        }
        cv_.notify_all();
        for (;;) {
            int i = next_.fetch_add(1, std::memory_order_relaxed);
            if (i >= total_)
                break;
            fn(i);
        }
        std::unique_lock lk(m_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
    }

private:
    void worker() {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(int)>* fn = nullptr;
            {
                std::unique_lock lk(m_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_)
                    return;
                seen = generation_;
                fn = job_;
            }
            for (;;) {
                int i = next_.fetch_add(1, std::memory_order_relaxed);
                if (i >= total_)
                    break;
                (*fn)(i);
            }
            {
                std::lock_guard lk(m_);
                if (--pending_ == 0)
                    done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex m_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(int)>* job_ = nullptr;
    std::atomic<int> next_{0};
    int total_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

int& thread_count() {
    static int n = [] {
        if (const char* env = std::getenv("REFIR_THREADS")) {
            int v = std::atoi(env);
            if (v > 0)
                return std::min(v, 64);
        }
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        return std::clamp(hw, 1, 8);
    }();
    return n;
}

WorkerPool& pool() {
    static WorkerPool p(std::max(0, thread_count() - 1));
    return p;
}

// Below this many MACs a GEMM is not worth waking workers for.
constexpr long long kParallelMacThreshold = 1'500'000;

template <typename BlockFn>
void run_gemm(BlockFn block, const float* A, const float* B, float* C, int M, int N, int K,
              bool accumulate) {
    long long macs = static_cast<long long>(M) * N * K;
    int nthreads = thread_count();
    if (nthreads <= 1 || macs < kParallelMacThreshold || M < 2) {
        block(A, B, C, M, N, K, accumulate);
        return;
    }
    int chunks = std::min(M, nthreads * 4);
    int rows_per_chunk = (M + chunks - 1) / chunks;
    chunks = (M + rows_per_chunk - 1) / rows_per_chunk;
    pool().run(chunks, [&](int ci) {
        int r0 = ci * rows_per_chunk;
        int r1 = std::min(M, r0 + rows_per_chunk);
        block(A + static_cast<std::size_t>(r0) * K, B, C + static_cast<std::size_t>(r0) * N,
              r1 - r0, N, K, accumulate);
    });
}

} // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

bool set_mode(Mode m) {
    Dispatch d = resolve(m);
    if (!d.ops)
        return false;
    dispatch() = d;
    return true;
}

Mode active_mode() {
    return dispatch().mode;
}

const char* active_mode_name() {
    switch (active_mode()) {
    case Mode::Avx2:
        return "avx2";
    default:
        return "scalar";
    }
}

void set_threads(int n) {
    if (n <= 0)
        n = static_cast<int>(std::thread::hardware_concurrency());
    thread_count() = std::clamp(n, 1, 64);
}

int threads() {
    return thread_count();
}

float dot(const float* a, const float* b, std::size_t n) { return ops().dot(a, b, n); }
float sum(const float* x, std::size_t n) { return ops().sum(x, n); }
float sumsq(const float* x, std::size_t n) { return ops().sumsq(x, n); }
float max_val(const float* x, std::size_t n) { return ops().max_val(x, n); }
float sqdiff_sum(const float* a, const float* b, std::size_t n) { return ops().sqdiff_sum(a, b, n); }
void axpy(float a, const float* x, float* y, std::size_t n) { ops().axpy(a, x, y, n); }
void scale(float* x, std::size_t n, float a) { ops().scale(x, n, a); }
void vadd(const float* a, const float* b, float* out, std::size_t n) { ops().vadd(a, b, out, n); }
void vmul(const float* a, const float* b, float* out, std::size_t n) { ops().vmul(a, b, out, n); }
void vmadd(const float* a, const float* b, float* acc, std::size_t n) { ops().vmadd(a, b, acc, n); }
void affine(const float* x, float* out, std::size_t n, float scale, float shift) {
    ops().affine(x, out, n, scale, shift);
}
void blend2(const float* a, const float* b, const float* w, float* out, std::size_t n) {
    ops().blend2(a, b, w, out, n);
}
void exp_inplace(float* x, std::size_t n) { ops().exp_inplace(x, n); }
void silu(const float* x, float* out, std::size_t n) { ops().silu(x, out, n); }

void softmax_row(float* x, std::size_t n) {
    if (n == 0)
        return;
    float m = ops().max_val(x, n);
    ops().affine(x, x, n, 1.f, -m);
    ops().exp_inplace(x, n);
    float s = ops().sum(x, n);
    ops().scale(x, n, 1.f / s);
}

void gemm(const float* A, const float* B, float* C, int M, int N, int K, bool accumulate) {
    run_gemm(ops().gemm_block, A, B, C, M, N, K, accumulate);
}

void gemm_nt(const float* A, const float* B, float* C, int M, int N, int K, bool accumulate) {
    run_gemm(ops().gemm_nt_block, A, B, C, M, N, K, accumulate);
}

} // namespace refir::kernels
