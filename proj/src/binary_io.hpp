#pragma once

// Little-endian primitives shared by the checkpoint and dataset formats.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "vicc/error.hpp"

namespace vicc::detail {

template <typename U>
void put_le(std::ostream& out, U v) {
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(U)> buf{};
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
        throw TruncatedError(std::string("truncated file while reading ") + what);
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(get_le<std::uint64_t>(in, what));
}
inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(get_le<std::uint32_t>(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* format) {
    char buf[4] = {};
    in.read(buf, 4);
    if (in.gcount() != 4) throw TruncatedError(std::string(format) + ": file shorter than magic");
    if (std::string(buf, 4) != std::string(magic, 4)) {
        throw BadMagicError(std::string(format) + ": bad magic, expected \"" + magic + "\"");
    }
}

}  // namespace vicc::detail
