#pragma once
// Reduction kernels for the per-subject loops of the likelihood.
//
// Every kernel exists as a portable scalar reference and, on x86-64, as an
// AVX2/FMA variant. The active table is chosen once at first use from the
// CPU feature bits; PENHAZ_KERNELS=scalar forces the reference path.
//
// Summation order inside a kernel is fixed for a given table, so results are
// reproducible run-to-run on the same machine. The scalar and SIMD tables
// agree to rounding, not bitwise.

#include <cstddef>
#include <span>
#include <string_view>

namespace penhaz::kernels {

struct KernelTable {
    std::string_view name;
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// sum_i w[i] * a[i] * b[i]
    double (*wdot)(const double* w, const double* a, const double* b, std::size_t n);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// out[i] = a[i] * b[i]
    void (*hadamard)(const double* a, const double* b, double* out, std::size_t n);
};

const KernelTable& scalar_table();

/// Null when the SIMD variant is not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

/// Table used by the library: AVX2 when available unless overridden.
const KernelTable& active();

// Span front ends over the active table. Mismatched lengths throw
// std::invalid_argument.
double dot(std::span<const double> a, std::span<const double> b);
double wdot(std::span<const double> w, std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out);

}  // namespace penhaz::kernels
