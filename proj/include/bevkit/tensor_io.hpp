#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace bevkit {

// Binary tensor file: magic "RTEN", version 0x01, dtype byte
// (0x01 = f32, 0x02 = f64), u32 rank, rank x u64 extents, row-major
// payload. All fields little-endian.

enum class TensorDtype : std::uint8_t { f32 = 0x01, f64 = 0x02 };

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    // assumes little-endian host; all supported targets are
    static_assert(sizeof(T) <= 8);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace detail

inline void write_tensor(const std::string& path, const Tensor& t,
                         TensorDtype dtype = TensorDtype::f64) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_tensor: cannot open " + path);
    os.write("RTEN", 4);
    detail::write_le<std::uint8_t>(os, 0x01);
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) {
        detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.extent(i)));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (dtype == TensorDtype::f64) {
            detail::write_le<double>(os, t[i]);
        } else {
            detail::write_le<float>(os, static_cast<float>(t[i]));
        }
    }
    if (!os) throw std::runtime_error("write_tensor: write failed for " + path);
}

inline Tensor read_tensor(const std::string& path, TensorDtype* dtype_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_tensor: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RTEN", 4) != 0) {
        throw std::runtime_error("read_tensor: bad magic in " + path);
    }
    auto version = detail::read_le<std::uint8_t>(is);
    if (version != 0x01) throw std::runtime_error("read_tensor: unsupported version in " + path);
    auto dtype = static_cast<TensorDtype>(detail::read_le<std::uint8_t>(is));
    if (dtype != TensorDtype::f32 && dtype != TensorDtype::f64) {
        throw std::runtime_error("read_tensor: unknown dtype in " + path);
    }
    auto rank = detail::read_le<std::uint32_t>(is);
    if (rank < 1 || rank > 5) throw std::runtime_error("read_tensor: bad rank in " + path);
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
        e = static_cast<std::size_t>(detail::read_le<std::uint64_t>(is));
        n *= e;
    }
    std::vector<double> data(n);
    for (auto& v : data) {
        v = (dtype == TensorDtype::f64) ? detail::read_le<double>(is)
                                        : static_cast<double>(detail::read_le<float>(is));
    }
    if (!is) throw std::runtime_error("read_tensor: truncated file " + path);
    if (dtype_out) *dtype_out = dtype;
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace bevkit
