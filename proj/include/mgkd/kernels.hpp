#pragma once

// Float inner loops used by layers and the optimizer. Every kernel has a
// portable scalar reference and, on x86-64, an AVX2/FMA variant. The active
// table is chosen once at first use from CPUID; MGKD_KERNELS=scalar|avx2
// overrides the choice.

#include <cstddef>
#include <string_view>

namespace mgkd::kernels {

struct KernelTable {
    std::string_view name;

    /// sum_i a[i] * b[i]
    float (*dot)(const float* a, const float* b, std::size_t n);

    /// y += alpha * x
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);

    /// C(m x n) (+)= A(m x k) * B(k x n); all row-major with leading dims.
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const float* a, std::size_t lda,
                    const float* b, std::size_t ldb,
                    float* c, std::size_t ldc, bool accumulate);

    /// C(m x n) (+)= A(m x k) * B(n x k)^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const float* a, std::size_t lda,
                    const float* b, std::size_t ldb,
                    float* c, std::size_t ldc, bool accumulate);

    /// C(m x n) (+)= A(k x m)^T * B(k x n)
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const float* a, std::size_t lda,
                    const float* b, std::size_t ldb,
                    float* c, std::size_t ldc, bool accumulate);

    /// out[i] = max(in[i], 0)
    void (*relu)(const float* in, float* out, std::size_t n);

    /// grad_in[i] = in[i] > 0 ? grad_out[i] : 0
    void (*relu_backward)(const float* in, const float* grad_out, float* grad_in, std::size_t n);

    /// Heavy-ball SGD: v = momentum*v + (g + wd*w); w -= lr*v
    void (*sgd_momentum)(float* w, const float* g, float* v, std::size_t n,
                         float lr, float momentum, float weight_decay);
};

const KernelTable& scalar_table();

/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

/// Table selected for this process.
const KernelTable& active();

/// Force a specific table (tests and benchmarks). Not thread-safe against
/// concurrent kernel calls.
void set_active(const KernelTable& table);

} // namespace mgkd::kernels
