#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernel_impls.hpp"
#include "mgkd/kernels.hpp"

namespace mgkd::kernels {
namespace {

constexpr KernelTable kScalar{
    "scalar",
    scalar::dot, scalar::axpy, scalar::gemm_nn, scalar::gemm_nt, scalar::gemm_tn,
    scalar::relu, scalar::relu_backward, scalar::sgd_momentum,
};

#if defined(MGKD_HAVE_AVX2)
constexpr KernelTable kAvx2{
    "avx2",
    avx2::dot, avx2::axpy, avx2::gemm_nn, avx2::gemm_nt, avx2::gemm_tn,
    avx2::relu, avx2::relu_backward, avx2::sgd_momentum,
};

bool cpu_has_avx2() {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* select_default() {
    const KernelTable* fast = avx2_table();
    if (const char* env = std::getenv("MGKD_KERNELS")) {
        const std::string_view want(env);
        if (want == "scalar") return &kScalar;
        if (want == "avx2" && fast) return fast;
    }
    return fast ? fast : &kScalar;
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{select_default()};
    return table;
}

} // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(MGKD_HAVE_AVX2)
    static const bool supported = cpu_has_avx2();
    return supported ? &kAvx2 : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) { current().store(&table, std::memory_order_release); }

} // namespace mgkd::kernels
