#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "rar/params.hpp"
#include "rar/tensor.hpp"

namespace rar {

// Parameter checkpoint file. Layout:
//   8-byte magic "RARCKPT\0", u32 version, u32 parameter count, then per
//   parameter: u32 name length, name bytes, u32 rank, u32 extents[rank],
//   raw little-endian 32-bit reals.
// Round-trips bit-exactly for float parameter sets.

namespace detail {

constexpr char kCkptMagic[8] = {'R', 'A', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

inline float read_f32(std::istream& is) {
    const std::uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const ParamSet<T>& ps) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(detail::kCkptMagic, 8);
    detail::write_u32(os, detail::kCkptVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(ps.size()));
    for (const auto& [name, e] : ps) {
        detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(os, static_cast<std::uint32_t>(e.value.rank()));
        for (int ext : e.value.shape) detail::write_u32(os, static_cast<std::uint32_t>(ext));
        for (const T& x : e.value.data) detail::write_f32(os, static_cast<float>(x));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

template <typename T>
ParamSet<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    const std::uint32_t version = detail::read_u32(is);
    if (version != detail::kCkptVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = detail::read_u32(is);
    ParamSet<T> ps;
    for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint32_t name_len = detail::read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rank = detail::read_u32(is);
        Shape shape(rank);
        for (std::uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(detail::read_u32(is));
        Tensor<T> t(shape);
        for (auto& x : t.data) x = static_cast<T>(detail::read_f32(is));
        if (!is) throw std::runtime_error("checkpoint: truncated parameter '" + name + "'");
        ps.add(name, std::move(t));
    }
    return ps;
}

}  // namespace rar
