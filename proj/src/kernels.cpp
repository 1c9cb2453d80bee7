#include "penhaz/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string_view>

namespace penhaz::kernels {

#ifdef PENHAZ_HAVE_AVX2
const KernelTable& avx2_table_impl();
#endif

namespace {
void require(bool same_length) {
    if (!same_length) throw std::invalid_argument("kernel operands differ in length");
}
}  // namespace

const KernelTable* avx2_table() {
#ifdef PENHAZ_HAVE_AVX2
    static const bool supported = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    }();
    return supported ? &avx2_table_impl() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    static const KernelTable& table = []() -> const KernelTable& {
        if (const char* env = std::getenv("PENHAZ_KERNELS"); env && std::string_view(env) == "scalar")
            return scalar_table();
        if (const KernelTable* simd = avx2_table()) return *simd;
        return scalar_table();
    }();
    return table;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size());
    return active().dot(a.data(), b.data(), a.size());
}

double wdot(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
    require(w.size() == a.size() && a.size() == b.size());
    return active().wdot(w.data(), a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size());
    active().axpy(alpha, x.data(), y.data(), x.size());
}

void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    require(a.size() == b.size() && a.size() == out.size());
    active().hadamard(a.data(), b.data(), out.data(), a.size());
}

}  // namespace penhaz::kernels
