// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// CPUID check, so nothing here may run on a machine without AVX2.

#include <immintrin.h>

#include "kernel_impls.hpp"

namespace mgkd::kernels::avx2 {
namespace {

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

// One output row segment: c[0..n) (+)= sum_p alpha(p) * b[p*ldb + 0..n).
// alpha is read with stride `astride` so the same body serves NN and TN.
inline void row_update(std::size_t n, std::size_t k, const float* a, std::size_t astride,
                       const float* b, std::size_t ldb, float* c, bool accumulate) {
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
        __m256 c0 = accumulate ? _mm256_loadu_ps(c + j) : _mm256_setzero_ps();
        __m256 c1 = accumulate ? _mm256_loadu_ps(c + j + 8) : _mm256_setzero_ps();
        __m256 c2 = accumulate ? _mm256_loadu_ps(c + j + 16) : _mm256_setzero_ps();
        __m256 c3 = accumulate ? _mm256_loadu_ps(c + j + 24) : _mm256_setzero_ps();
        for (std::size_t p = 0; p < k; ++p) {
            const __m256 av = _mm256_broadcast_ss(a + p * astride);
            const float* brow = b + p * ldb + j;
            c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow), c0);
            c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 8), c1);
            c2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 16), c2);
            c3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 24), c3);
        }
        _mm256_storeu_ps(c + j, c0);
        _mm256_storeu_ps(c + j + 8, c1);
        _mm256_storeu_ps(c + j + 16, c2);
        _mm256_storeu_ps(c + j + 24, c3);
    }
    for (; j + 8 <= n; j += 8) {
        __m256 c0 = accumulate ? _mm256_loadu_ps(c + j) : _mm256_setzero_ps();
        for (std::size_t p = 0; p < k; ++p)
            c0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p * astride),
                                 _mm256_loadu_ps(b + p * ldb + j), c0);
        _mm256_storeu_ps(c + j, c0);
    }
    for (; j < n; ++j) {
        float acc = accumulate ? c[j] : 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * astride] * b[p * ldb + j];
        c[j] = acc;
    }
}

} // namespace

float dot(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda, const float* b, std::size_t ldb,
             float* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        row_update(n, k, a + i * lda, 1, b, ldb, c + i * ldc, accumulate);
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
    for (std::size_t i = 0; i < m; ++i)
        row_update(n, k, a + i, lda, b, ldb, c + i * ldc, accumulate);
}

void relu(const float* in, float* out, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(in + i), zero));
    for (; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward(const float* in, const float* grad_out, float* grad_in, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(in + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(grad_in + i, _mm256_and_ps(mask, _mm256_loadu_ps(grad_out + i)));
    }
    for (; i < n; ++i) grad_in[i] = in[i] > 0.0f ? grad_out[i] : 0.0f;
}

void sgd_momentum(float* w, const float* g, float* v, std::size_t n,
                  float lr, float momentum, float weight_decay) {
    const __m256 mv = _mm256_set1_ps(momentum);
    const __m256 wdv = _mm256_set1_ps(weight_decay);
    const __m256 lrv = _mm256_set1_ps(lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 wi = _mm256_loadu_ps(w + i);
        const __m256 step = _mm256_fmadd_ps(wdv, wi, _mm256_loadu_ps(g + i));
        const __m256 vi = _mm256_fmadd_ps(mv, _mm256_loadu_ps(v + i), step);
        _mm256_storeu_ps(v + i, vi);
        _mm256_storeu_ps(w + i, _mm256_fnmadd_ps(lrv, vi, wi));
    }
    for (; i < n; ++i) {
        v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
        w[i] -= lr * v[i];
    }
}

} // namespace mgkd::kernels::avx2
