#pragma once

// Internal helpers for text and little-endian binary encodings.

#include "avatar/common.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace avatar::detail {

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& token) {
    double v = 0.0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw IoError("malformed number '" + token + "'");
    return v;
}

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_le(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("unexpected end of binary stream");
    return value;
}

}  // namespace avatar::detail
