#include "flowsynth/kernels/kernels.hpp"

namespace flowsynth::kernels {

const OpsTable<float>* scalar_table_f32();
const OpsTable<double>* scalar_table_f64();
const OpsTable<float>* avx2_table_f32();
const OpsTable<double>* avx2_table_f64();

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

static Backend detect_backend() {
#if defined(__x86_64__) || defined(__i386__)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Backend::avx2;
#endif
    return Backend::scalar;
}

Backend active_backend() {
    static const Backend b = detect_backend();
    return b;
}

template <>
const OpsTable<float>* table<float>(Backend b) {
    switch (b) {
        case Backend::scalar: return scalar_table_f32();
        case Backend::avx2: return avx2_table_f32();
    }
    return nullptr;
}

template <>
const OpsTable<double>* table<double>(Backend b) {
    switch (b) {
        case Backend::scalar: return scalar_table_f64();
        case Backend::avx2: return avx2_table_f64();
    }
    return nullptr;
}

} // namespace flowsynth::kernels
