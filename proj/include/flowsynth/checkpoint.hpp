#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowsynth/errors.hpp"
#include "flowsynth/tensor.hpp"

// Binary tensor container. Layout, little-endian throughout:
//   magic "VSFK" | version u32 | tensor count u32
//   per tensor: name length u16 | name bytes | ndim u8 | dims u64[ndim]
//               | dtype u8 (0 = f32, 1 = f64) | raw scalar data
// Tensor order is preserved exactly, so save(load(f)) reproduces f byte for
// byte.

namespace flowsynth {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::uint8_t dtype = 0; // 0 = f32, 1 = f64
    std::vector<float> f32;
    std::vector<double> f64;

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointTensor>& tensors);
std::vector<CheckpointTensor> load_checkpoint(const std::string& path);

template <typename T>
CheckpointTensor to_checkpoint(const std::string& name, const Tensor<T>& t) {
    CheckpointTensor c;
    c.name = name;
    c.dims.assign(t.shape().begin(), t.shape().end());
    if constexpr (std::is_same_v<T, float>) {
        c.dtype = 0;
        c.f32.assign(t.data().begin(), t.data().end());
    } else {
        c.dtype = 1;
        c.f64.assign(t.data().begin(), t.data().end());
    }
    return c;
}

template <typename T>
void load_into(const CheckpointTensor& c, Tensor<T>& t) {
    if (c.numel() != t.size())
        throw ShapeError("checkpoint tensor '" + c.name + "' has " + std::to_string(c.numel()) +
                         " elements, expected " + std::to_string(t.size()));
    auto dst = t.data();
    if (c.dtype == 0) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(c.f32[i]);
    } else {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(c.f64[i]);
    }
}

template <typename T>
Tensor<T> tensor_from_checkpoint(const CheckpointTensor& c) {
    std::vector<std::size_t> shape(c.dims.begin(), c.dims.end());
    Tensor<T> t = Tensor<T>::zeros(shape);
    load_into(c, t);
    return t;
}

} // namespace flowsynth
