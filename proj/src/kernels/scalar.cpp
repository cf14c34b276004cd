#include "kernel_impls.hpp"

namespace mgkd::kernels::scalar {

float dot(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda, const float* b, std::size_t ldb,
             float* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0f;
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = a[i * lda + p];
            if (aip == 0.0f) continue;
            const float* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda, const float* b, std::size_t ldb,
             float* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const float v = dot(a + i * lda, b + j * ldb, k);
            c[i * ldc + j] = accumulate ? c[i * ldc + j] + v : v;
        }
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda, const float* b, std::size_t ldb,
             float* c, std::size_t ldc, bool accumulate) {
    if (!accumulate)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = 0.0f;
    for (std::size_t p = 0; p < k; ++p) {
        const float* arow = a + p * lda;
        const float* brow = b + p * ldb;
        for (std::size_t i = 0; i < m; ++i) {
            const float api = arow[i];
            if (api == 0.0f) continue;
            float* crow = c + i * ldc;
            for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

void relu(const float* in, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward(const float* in, const float* grad_out, float* grad_in, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) grad_in[i] = in[i] > 0.0f ? grad_out[i] : 0.0f;
}

void sgd_momentum(float* w, const float* g, float* v, std::size_t n,
                  float lr, float momentum, float weight_decay) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
        w[i] -= lr * v[i];
    }
}

} // namespace mgkd::kernels::scalar
