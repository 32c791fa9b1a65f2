#pragma once

#include <cstddef>

// Scalar reference kernels plus AVX2 variants for the float inner loops
// (reductions, elementwise math, softmax, GEMM). The implementation is
// picked once at startup from CPUID and can be forced for testing; both
// paths are equivalence-tested against each other.

namespace refir::kernels {

enum class Mode {
    Auto,   // pick the widest supported ISA
    Scalar, // portable reference path
    Avx2,   // AVX2+FMA path
};

// Returns false if the requested mode is not supported on this CPU
// (the previous mode stays active).
bool set_mode(Mode m);
Mode active_mode();
const char* active_mode_name();
bool cpu_has_avx2();

// Worker threads used by gemm for large problems. 0 = hardware count.
// Work is split by output rows, so results are identical for any count.
void set_threads(int n);
int threads();

// Reductions
float dot(const float* a, const float* b, std::size_t n);
float sum(const float* x, std::size_t n);
float sumsq(const float* x, std::size_t n);
float max_val(const float* x, std::size_t n);
float sqdiff_sum(const float* a, const float* b, std::size_t n);

// Elementwise
void axpy(float a, const float* x, float* y, std::size_t n); // y += a*x
void scale(float* x, std::size_t n, float a);
void vadd(const float* a, const float* b, float* out, std::size_t n);
void vmul(const float* a, const float* b, float* out, std::size_t n);
void vmadd(const float* a, const float* b, float* acc, std::size_t n); // acc += a*b
void affine(const float* x, float* out, std::size_t n, float scale, float shift);
// out = (1-w)*a + w*b, elementwise weight. Exact at w==0 and w==1.
void blend2(const float* a, const float* b, const float* w, float* out, std::size_t n);
void exp_inplace(float* x, std::size_t n);
void silu(const float* x, float* out, std::size_t n);

// In-place numerically stable softmax over one row.
void softmax_row(float* x, std::size_t n);

// Row-major GEMM. C[M,N] (+)= A[M,K] * B[K,N]
void gemm(const float* A, const float* B, float* C, int M, int N, int K, bool accumulate);
// C[M,N] (+)= A[M,K] * B[N,K]^T  (B stored row-major with rows of length K)
void gemm_nt(const float* A, const float* B, float* C, int M, int N, int K, bool accumulate);

} // namespace refir::kernels
