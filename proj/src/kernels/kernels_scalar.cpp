#include "flowsynth/kernels/kernels.hpp"

#include <cmath>
#include <cstring>

namespace flowsynth::kernels {

namespace {

template <typename T>
void add_impl(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_impl(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_impl(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale_impl(const T* x, T alpha, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void axpy_impl(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot_impl(const T* a, const T* b, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T sum_impl(const T* x, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
T sumsq_impl(const T* x, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <typename T>
T max_impl(const T* x, std::size_t n) {
    T m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

template <typename T>
void normalize_affine_impl(const T* x, T* out, std::size_t n, T mean, T inv_std, const T* gain,
                           const T* bias) {
    for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv_std * gain[i] + bias[i];
}

template <typename T>
void adamw_impl(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamwArgs<T>& args) {
    const T one_minus_b1 = T(1) - args.beta1;
    const T one_minus_b2 = T(1) - args.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const T g = grad[i];
        m[i] = args.beta1 * m[i] + one_minus_b1 * g;
        v[i] = args.beta2 * v[i] + one_minus_b2 * g * g;
        const T m_hat = m[i] * args.bias_c1;
        const T v_hat = v[i] * args.bias_c2;
        param[i] -= args.lr * (m_hat / (std::sqrt(v_hat) + args.eps) + args.weight_decay * param[i]);
    }
}

template <typename T>
void matmul_impl(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
    if (!accumulate) std::memset(C, 0, m * n * sizeof(T));
    for (std::size_t i = 0; i < m; ++i) {
        T* c_row = C + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T a = A[i * k + kk];
            const T* b_row = B + kk * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

template <typename T>
void matmul_nt_impl(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* a_row = A + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T d = dot_impl(a_row, B + j * k, k);
            if (accumulate)
                C[i * n + j] += d;
            else
                C[i * n + j] = d;
        }
    }
}

template <typename T>
void matmul_tn_impl(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate) {
    if (!accumulate) std::memset(C, 0, k * n * sizeof(T));
    for (std::size_t i = 0; i < m; ++i) {
        const T* b_row = B + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T a = A[i * k + kk];
            T* c_row = C + kk * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

template <typename T>
constexpr OpsTable<T> make_scalar_table() {
    return OpsTable<T>{
        add_impl<T>,    sub_impl<T>,   mul_impl<T>,   scale_impl<T>,
        axpy_impl<T>,   dot_impl<T>,   sum_impl<T>,   sumsq_impl<T>,
        max_impl<T>,    normalize_affine_impl<T>,     adamw_impl<T>,
        matmul_impl<T>, matmul_nt_impl<T>,            matmul_tn_impl<T>,
    };
}

const OpsTable<float> kScalarTableF32 = make_scalar_table<float>();
const OpsTable<double> kScalarTableF64 = make_scalar_table<double>();

} // namespace

const OpsTable<float>* scalar_table_f32() { return &kScalarTableF32; }
const OpsTable<double>* scalar_table_f64() { return &kScalarTableF64; }

} // namespace flowsynth::kernels
