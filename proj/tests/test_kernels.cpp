// Scalar vs AVX2 kernel equivalence. The vector variants reassociate sums,
// so reductions are compared with a length-scaled tolerance; elementwise
// kernels must match exactly.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mgkd/kernels.hpp"

using mgkd::kernels::KernelTable;

namespace {

std::vector<float> random_vec(std::size_t n, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

const KernelTable* vector_table() { return mgkd::kernels::avx2_table(); }

#define REQUIRE_AVX2()                                                   \
    const KernelTable* fast = vector_table();                           \
    if (!fast) GTEST_SKIP() << "AVX2 kernels not available on this host"; \
    const KernelTable& ref = mgkd::kernels::scalar_table()

const std::size_t kSizes[] = {0, 1, 3, 7, 8, 9, 15, 16, 17, 31, 33, 64, 100, 257};

} // namespace

TEST(Kernels, ActiveTableHasName) {
    EXPECT_FALSE(mgkd::kernels::active().name.empty());
    EXPECT_EQ(mgkd::kernels::scalar_table().name, "scalar");
}

TEST(Kernels, ScalarDotMatchesDoubleLoop) {
    std::mt19937_64 rng(1);
    const auto a = random_vec(37, rng), b = random_vec(37, rng);
    double want = 0;
    for (std::size_t i = 0; i < a.size(); ++i) want += double(a[i]) * b[i];
    EXPECT_NEAR(mgkd::kernels::scalar_table().dot(a.data(), b.data(), a.size()), want, 1e-5);
}

TEST(Kernels, DotEquivalence) {
    REQUIRE_AVX2();
    std::mt19937_64 rng(2);
    for (std::size_t n : kSizes) {
        const auto a = random_vec(n, rng), b = random_vec(n, rng);
        const float r = ref.dot(a.data(), b.data(), n);
        const float f = fast->dot(a.data(), b.data(), n);
        EXPECT_NEAR(r, f, 1e-6 * (1.0 + n)) << "n=" << n;
    }
}

TEST(Kernels, AxpyEquivalence) {
    REQUIRE_AVX2();
    std::mt19937_64 rng(3);
    for (std::size_t n : kSizes) {
        const auto x = random_vec(n, rng);
        auto y1 = random_vec(n, rng);
        auto y2 = y1;
        ref.axpy(0.37f, x.data(), y1.data(), n);
        fast->axpy(0.37f, x.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-6f) << "n=" << n << " i=" << i;
    }
}

TEST(Kernels, ReluAndBackwardBitExact) {
    REQUIRE_AVX2();
    std::mt19937_64 rng(4);
    for (std::size_t n : kSizes) {
        auto in = random_vec(n, rng);
        if (n > 2) in[1] = 0.0f;
        const auto g = random_vec(n, rng);
        std::vector<float> o1(n), o2(n), gi1(n), gi2(n);
        ref.relu(in.data(), o1.data(), n);
        fast->relu(in.data(), o2.data(), n);
        ref.relu_backward(in.data(), g.data(), gi1.data(), n);
        fast->relu_backward(in.data(), g.data(), gi2.data(), n);
        EXPECT_EQ(o1, o2) << "n=" << n;
        EXPECT_EQ(gi1, gi2) << "n=" << n;
    }
}

TEST(Kernels, SgdMomentumEquivalence) {
    REQUIRE_AVX2();
    std::mt19937_64 rng(5);
    for (std::size_t n : kSizes) {
        auto w1 = random_vec(n, rng);
        auto v1 = random_vec(n, rng, -0.1f, 0.1f);
        const auto g = random_vec(n, rng);
        auto w2 = w1, v2 = v1;
        for (int step = 0; step < 5; ++step) {
            ref.sgd_momentum(w1.data(), g.data(), v1.data(), n, 0.05f, 0.9f, 5e-4f);
            fast->sgd_momentum(w2.data(), g.data(), v2.data(), n, 0.05f, 0.9f, 5e-4f);
        }
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_NEAR(w1[i], w2[i], 1e-6f);
            EXPECT_NEAR(v1[i], v2[i], 1e-6f);
        }
    }
}

// Exercises every gemm layout over shapes that hit full vector blocks,
// tails and padded leading dimensions.
class GemmEquivalence : public ::testing::TestWithParam<std::tuple<int, int, int, bool>> {};

TEST_P(GemmEquivalence, AllLayouts) {
    REQUIRE_AVX2();
    const auto [mi, ni, ki, acc] = GetParam();
    const std::size_t m = mi, n = ni, k = ki;
    std::mt19937_64 rng(m * 131 + n * 17 + k);
    const std::size_t pad = 3;

    auto check = [&](auto gemm_ref, auto gemm_fast, std::size_t a_rows, std::size_t a_cols, std::size_t b_rows,
                     std::size_t b_cols, const char* what) {
        const std::size_t lda = a_cols + pad, ldb = b_cols + pad, ldc = n + pad;
        const auto a = random_vec(a_rows * lda, rng);
        const auto b = random_vec(b_rows * ldb, rng);
        auto c1 = random_vec(m * ldc, rng);
        auto c2 = c1;
        gemm_ref(m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc, acc);
        gemm_fast(m, n, k, a.data(), lda, b.data(), ldb, c2.data(), ldc, acc);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < ldc; ++j) {
                const float tol = j < n ? 1e-5f * (1.0f + k) : 0.0f; // padding columns untouched
                ASSERT_NEAR(c1[i * ldc + j], c2[i * ldc + j], tol) << what << " m=" << m << " n=" << n << " k=" << k;
            }
    };
    check(ref.gemm_nn, fast->gemm_nn, m, k, k, n, "nn");
    check(ref.gemm_nt, fast->gemm_nt, m, k, n, k, "nt");
    check(ref.gemm_tn, fast->gemm_tn, k, m, k, n, "tn");
}

INSTANTIATE_TEST_SUITE_P(Shapes, GemmEquivalence,
                         ::testing::Combine(::testing::Values(1, 4, 7, 16), ::testing::Values(1, 8, 13, 33),
                                            ::testing::Values(1, 9, 27, 64), ::testing::Bool()));

TEST(Kernels, ScalarGemmMatchesNaive) {
    std::mt19937_64 rng(9);
    const std::size_t m = 5, n = 6, k = 7;
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    std::vector<float> c(m * n, 0.0f);
    mgkd::kernels::scalar_table().gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += double(a[i * k + p]) * b[p * n + j];
            EXPECT_NEAR(c[i * n + j], s, 1e-5);
        }
}

TEST(Kernels, SetActiveSwitchesTable) {
    const KernelTable& before = mgkd::kernels::active();
    mgkd::kernels::set_active(mgkd::kernels::scalar_table());
    EXPECT_EQ(mgkd::kernels::active().name, "scalar");
    mgkd::kernels::set_active(before);
    EXPECT_EQ(mgkd::kernels::active().name, before.name);
}
