// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; nothing here runs unless CPUID reported both features.

#include "flowsynth/kernels/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#define FLOWSYNTH_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define FLOWSYNTH_HAVE_AVX2_BUILD 0
#endif

#include <cmath>
#include <cstring>

namespace flowsynth::kernels {

#if FLOWSYNTH_HAVE_AVX2_BUILD

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

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swap = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

inline float hmax(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_max_ps(lo, hi);
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_movehdup_ps(lo));
    return _mm_cvtss_f32(lo);
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// ---------------------------------------------------------------- float ----

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f32(const float* x, float alpha, float* out, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

inline void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
        _mm256_storeu_ps(y + i + 8,
                         _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8)));
    }
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

inline float dot_f32(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float r = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

float sum_f32(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

float sumsq_f32(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float r = hsum(acc);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

float max_f32(const float* x, std::size_t n) {
    if (n < 8) {
        float m = x[0];
        for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
        return m;
    }
    __m256 acc = _mm256_loadu_ps(x);
    std::size_t i = 8;
    for (; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
    float m = hmax(acc);
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

void normalize_affine_f32(const float* x, float* out, std::size_t n, float mean, float inv_std,
                          const float* gain, const float* bias) {
    const __m256 mv = _mm256_set1_ps(mean);
    const __m256 sv = _mm256_set1_ps(inv_std);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 t = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), mv), sv);
        _mm256_storeu_ps(out + i, _mm256_fmadd_ps(t, _mm256_loadu_ps(gain + i), _mm256_loadu_ps(bias + i)));
    }
    for (; i < n; ++i) out[i] = (x[i] - mean) * inv_std * gain[i] + bias[i];
}

void adamw_f32(float* param, const float* grad, float* m, float* v, std::size_t n,
               const AdamwArgs<float>& args) {
    const __m256 b1 = _mm256_set1_ps(args.beta1);
    const __m256 b2 = _mm256_set1_ps(args.beta2);
    const __m256 omb1 = _mm256_set1_ps(1.0f - args.beta1);
    const __m256 omb2 = _mm256_set1_ps(1.0f - args.beta2);
    const __m256 c1 = _mm256_set1_ps(args.bias_c1);
    const __m256 c2 = _mm256_set1_ps(args.bias_c2);
    const __m256 eps = _mm256_set1_ps(args.eps);
    const __m256 wd = _mm256_set1_ps(args.weight_decay);
    const __m256 lr = _mm256_set1_ps(args.lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 g = _mm256_loadu_ps(grad + i);
        const __m256 mi = _mm256_fmadd_ps(b1, _mm256_loadu_ps(m + i), _mm256_mul_ps(omb1, g));
        const __m256 vi =
            _mm256_fmadd_ps(b2, _mm256_loadu_ps(v + i), _mm256_mul_ps(omb2, _mm256_mul_ps(g, g)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        const __m256 m_hat = _mm256_mul_ps(mi, c1);
        const __m256 v_hat = _mm256_mul_ps(vi, c2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps);
        const __m256 p = _mm256_loadu_ps(param + i);
        const __m256 step = _mm256_fmadd_ps(wd, p, _mm256_div_ps(m_hat, denom));
        _mm256_storeu_ps(param + i, _mm256_fnmadd_ps(lr, step, p));
    }
    for (; i < n; ++i) {
        const float g = grad[i];
        m[i] = args.beta1 * m[i] + (1.0f - args.beta1) * g;
        v[i] = args.beta2 * v[i] + (1.0f - args.beta2) * g * g;
        const float m_hat = m[i] * args.bias_c1;
        const float v_hat = v[i] * args.bias_c2;
        param[i] -= args.lr * (m_hat / (std::sqrt(v_hat) + args.eps) + args.weight_decay * param[i]);
    }
}

void matmul_f32(const float* A, const float* B, float* C, std::size_t m, std::size_t k,
                std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, m * n * sizeof(float));
    for (std::size_t i = 0; i < m; ++i) {
        float* c_row = C + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) axpy_f32(A[i * k + kk], B + kk * n, c_row, n);
    }
}

void matmul_nt_f32(const float* A, const float* B, float* C, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* a_row = A + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const float d = dot_f32(a_row, B + j * k, k);
            if (accumulate)
                C[i * n + j] += d;
            else
                C[i * n + j] = d;
        }
    }
}

void matmul_tn_f32(const float* A, const float* B, float* C, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, k * n * sizeof(float));
    for (std::size_t i = 0; i < m; ++i) {
        const float* b_row = B + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) axpy_f32(A[i * k + kk], b_row, C + kk * n, n);
    }
}

// --------------------------------------------------------------- double ----

void add_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f64(const double* x, double alpha, double* out, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

inline void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4,
                         _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

inline double dot_f64(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double r = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double sum_f64(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double sumsq_f64(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

double max_f64(const double* x, std::size_t n) {
    if (n < 4) {
        double m = x[0];
        for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
        return m;
    }
    __m256d acc = _mm256_loadu_pd(x);
    std::size_t i = 4;
    for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    double m = hmax(acc);
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

void normalize_affine_f64(const double* x, double* out, std::size_t n, double mean, double inv_std,
                          const double* gain, const double* bias) {
    const __m256d mv = _mm256_set1_pd(mean);
    const __m256d sv = _mm256_set1_pd(inv_std);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d t = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), mv), sv);
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(t, _mm256_loadu_pd(gain + i), _mm256_loadu_pd(bias + i)));
    }
    for (; i < n; ++i) out[i] = (x[i] - mean) * inv_std * gain[i] + bias[i];
}

void adamw_f64(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamwArgs<double>& args) {
    const __m256d b1 = _mm256_set1_pd(args.beta1);
    const __m256d b2 = _mm256_set1_pd(args.beta2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - args.beta1);
    const __m256d omb2 = _mm256_set1_pd(1.0 - args.beta2);
    const __m256d c1 = _mm256_set1_pd(args.bias_c1);
    const __m256d c2 = _mm256_set1_pd(args.bias_c2);
    const __m256d eps = _mm256_set1_pd(args.eps);
    const __m256d wd = _mm256_set1_pd(args.weight_decay);
    const __m256d lr = _mm256_set1_pd(args.lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(omb1, g));
        const __m256d vi =
            _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d m_hat = _mm256_mul_pd(mi, c1);
        const __m256d v_hat = _mm256_mul_pd(vi, c2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps);
        const __m256d p = _mm256_loadu_pd(param + i);
        const __m256d step = _mm256_fmadd_pd(wd, p, _mm256_div_pd(m_hat, denom));
        _mm256_storeu_pd(param + i, _mm256_fnmadd_pd(lr, step, p));
    }
    for (; i < n; ++i) {
        const double g = grad[i];
        m[i] = args.beta1 * m[i] + (1.0 - args.beta1) * g;
        v[i] = args.beta2 * v[i] + (1.0 - args.beta2) * g * g;
        const double m_hat = m[i] * args.bias_c1;
        const double v_hat = v[i] * args.bias_c2;
        param[i] -= args.lr * (m_hat / (std::sqrt(v_hat) + args.eps) + args.weight_decay * param[i]);
    }
}

void matmul_f64(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* c_row = C + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) axpy_f64(A[i * k + kk], B + kk * n, c_row, n);
    }
}

void matmul_nt_f64(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = dot_f64(a_row, B + j * k, k);
            if (accumulate)
                C[i * n + j] += d;
            else
                C[i * n + j] = d;
        }
    }
}

void matmul_tn_f64(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, k * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* b_row = B + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) axpy_f64(A[i * k + kk], b_row, C + kk * n, n);
    }
}

const OpsTable<float> kAvx2TableF32 = {
    add_f32,    sub_f32,   mul_f32,   scale_f32, axpy_f32,      dot_f32,   sum_f32,
    sumsq_f32,  max_f32,   normalize_affine_f32, adamw_f32,     matmul_f32,
    matmul_nt_f32,         matmul_tn_f32,
};

const OpsTable<double> kAvx2TableF64 = {
    add_f64,    sub_f64,   mul_f64,   scale_f64, axpy_f64,      dot_f64,   sum_f64,
    sumsq_f64,  max_f64,   normalize_affine_f64, adamw_f64,     matmul_f64,
    matmul_nt_f64,         matmul_tn_f64,
};

} // namespace

const OpsTable<float>* avx2_table_f32() { return &kAvx2TableF32; }
const OpsTable<double>* avx2_table_f64() { return &kAvx2TableF64; }

#else // !FLOWSYNTH_HAVE_AVX2_BUILD

const OpsTable<float>* avx2_table_f32() { return nullptr; }
const OpsTable<double>* avx2_table_f64() { return nullptr; }

#endif

} // namespace flowsynth::kernels
