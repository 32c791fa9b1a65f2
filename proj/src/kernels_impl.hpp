#pragma once

#include <cstddef>

// Internal dispatch table shared between the scalar and AVX2 translation
// units. Only kernels.cpp and kernels_avx2.cpp include this.

namespace refir::kernels::detail {

struct KernelOps {
    float (*dot)(const float*, const float*, std::size_t);
    float (*sum)(const float*, std::size_t);
    float (*sumsq)(const float*, std::size_t);
    float (*max_val)(const float*, std::size_t);
    float (*sqdiff_sum)(const float*, const float*, std::size_t);
    void (*axpy)(float, const float*, float*, std::size_t);
    void (*scale)(float*, std::size_t, float);
    void (*vadd)(const float*, const float*, float*, std::size_t);
    void (*vmul)(const float*, const float*, float*, std::size_t);
    void (*vmadd)(const float*, const float*, float*, std::size_t);
    void (*affine)(const float*, float*, std::size_t, float, float);
    void (*blend2)(const float*, const float*, const float*, float*, std::size_t);
    void (*exp_inplace)(float*, std::size_t);
    void (*silu)(const float*, float*, std::size_t);
    // Single-threaded row-range GEMM blocks; threading is layered on top.
    void (*gemm_block)(const float*, const float*, float*, int, int, int, bool);
    void (*gemm_nt_block)(const float*, const float*, float*, int, int, int, bool);
};

const KernelOps* scalar_ops();
const KernelOps* avx2_ops(); // nullptr when the build has no AVX2 TU

} // namespace refir::kernels::detail
