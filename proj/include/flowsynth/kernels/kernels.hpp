#pragma once

#include <cstddef>
#include <string>

// Arithmetic inner loops behind the tensor layer. Every entry point has a
// portable scalar reference implementation and, on x86-64, an AVX2+FMA
// variant; the running table is picked once per process from CPUID. SIMD and
// scalar variants are equivalence-tested against each other (reductions up to
// re-association tolerance, pure elementwise ops exactly).

namespace flowsynth::kernels {

enum class Backend { scalar, avx2 };

const char* backend_name(Backend b);

template <typename T>
struct AdamwArgs {
    T lr;
    T beta1;
    T beta2;
    T eps;
    T weight_decay;
    T bias_c1; // 1 / (1 - beta1^step)
    T bias_c2; // 1 / (1 - beta2^step)
};

template <typename T>
struct OpsTable {
    void (*add)(const T* a, const T* b, T* out, std::size_t n);
    void (*sub)(const T* a, const T* b, T* out, std::size_t n);
    void (*mul)(const T* a, const T* b, T* out, std::size_t n);
    void (*scale)(const T* x, T alpha, T* out, std::size_t n);
    void (*axpy)(T alpha, const T* x, T* y, std::size_t n); // y += alpha * x
    T (*dot)(const T* a, const T* b, std::size_t n);
    T (*sum)(const T* x, std::size_t n);
    T (*sumsq)(const T* x, std::size_t n);
    T (*max)(const T* x, std::size_t n); // n >= 1
    // out[i] = (x[i] - mean) * inv_std * gain[i] + bias[i]
    void (*normalize_affine)(const T* x, T* out, std::size_t n, T mean, T inv_std,
                             const T* gain, const T* bias);
    void (*adamw)(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamwArgs<T>& args);
    // Row-major matrix products. `accumulate` adds into C instead of overwriting.
    // matmul:    C[m,n] (+)= A[m,k] * B[k,n]
    // matmul_nt: C[m,n] (+)= A[m,k] * B[n,k]^T
    // matmul_tn: C[k,n] (+)= A[m,k]^T * B[m,n]
    void (*matmul)(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n,
                   bool accumulate);
    void (*matmul_nt)(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate);
    void (*matmul_tn)(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate);
};

// Table for an explicit backend; nullptr when this CPU cannot run it.
template <typename T>
const OpsTable<T>* table(Backend b);

Backend active_backend();

// Table selected at startup: AVX2 when the CPU has AVX2+FMA, scalar otherwise.
template <typename T>
inline const OpsTable<T>& active() {
    return *table<T>(active_backend());
}

} // namespace flowsynth::kernels
