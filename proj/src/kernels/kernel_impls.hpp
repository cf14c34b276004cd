#pragma once

#include <cstddef>

namespace mgkd::kernels {

#define MGKD_KERNEL_DECLS                                                                  \
    float dot(const float* a, const float* b, std::size_t n);                              \
    void axpy(float alpha, const float* x, float* y, std::size_t n);                       \
    void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,              \
                 std::size_t lda, const float* b, std::size_t ldb, float* c,               \
                 std::size_t ldc, bool accumulate);                                        \
    void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,              \
                 std::size_t lda, const float* b, std::size_t ldb, float* c,               \
                 std::size_t ldc, bool accumulate);                                        \
    void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a,              \
                 std::size_t lda, const float* b, std::size_t ldb, float* c,               \
                 std::size_t ldc, bool accumulate);                                        \
    void relu(const float* in, float* out, std::size_t n);                                 \
    void relu_backward(const float* in, const float* grad_out, float* grad_in,             \
                       std::size_t n);                                                     \
    void sgd_momentum(float* w, const float* g, float* v, std::size_t n, float lr,         \
                      float momentum, float weight_decay);

namespace scalar { MGKD_KERNEL_DECLS }
namespace avx2 { MGKD_KERNEL_DECLS }

#undef MGKD_KERNEL_DECLS

} // namespace mgkd::kernels
