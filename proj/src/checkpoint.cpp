#include "flowsynth/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace flowsynth {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'F', 'K'};

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void put_u16(std::string& out, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
    out.append(b, 2);
}

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.append(b, 8);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint truncated");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= std::uint16_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return std::uint8_t(buf[pos++]);
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointTensor>& tensors) {
    std::string out;
    put_bytes(out, kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xFFFF) throw IoError("tensor name too long: " + t.name);
        put_u16(out, static_cast<std::uint16_t>(t.name.size()));
        put_bytes(out, t.name.data(), t.name.size());
        if (t.dims.size() > 0xFF) throw IoError("tensor rank too large");
        out.push_back(static_cast<char>(t.dims.size()));
        for (auto d : t.dims) put_u64(out, d);
        out.push_back(static_cast<char>(t.dtype));
        if (t.dtype == 0) {
            if (t.f32.size() != t.numel()) throw IoError("f32 payload size mismatch for " + t.name);
            for (float v : t.f32) put_u32(out, std::bit_cast<std::uint32_t>(v));
        } else if (t.dtype == 1) {
            if (t.f64.size() != t.numel()) throw IoError("f64 payload size mismatch for " + t.name);
            for (double v : t.f64) put_u64(out, std::bit_cast<std::uint64_t>(v));
        } else {
            throw IoError("unknown dtype code " + std::to_string(t.dtype));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
}

std::vector<CheckpointTensor> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw IoError(path + ": bad magic");
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    std::vector<CheckpointTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        const std::uint16_t name_len = r.u16();
        t.name = r.str(name_len);
        const std::uint8_t ndim = r.u8();
        t.dims.resize(ndim);
        for (std::uint8_t d = 0; d < ndim; ++d) t.dims[d] = r.u64();
        t.dtype = r.u8();
        const std::size_t n = t.numel();
        if (t.dtype == 0) {
            t.f32.resize(n);
            for (std::size_t j = 0; j < n; ++j) t.f32[j] = std::bit_cast<float>(r.u32());
        } else if (t.dtype == 1) {
            t.f64.resize(n);
            for (std::size_t j = 0; j < n; ++j) t.f64[j] = std::bit_cast<double>(r.u64());
        } else {
            throw IoError(path + ": unknown dtype code " + std::to_string(t.dtype));
        }
        tensors.push_back(std::move(t));
    }
    return tensors;
}

} // namespace flowsynth
