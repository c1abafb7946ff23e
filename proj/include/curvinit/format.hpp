#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <string>
#include <system_error>

#include "curvinit/errors.hpp"

namespace curvinit {

/// Shortest decimal string that parses back to the same double.
inline std::string format_shortest(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// 17 significant digits; lossless for IEEE doubles.
inline std::string format_exact(double x) {
    char buf[64];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf, static_cast<std::size_t>(n));
}

inline double parse_double(const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) throw InvalidInput("not a number: '" + text + "'");
    return v;
}

inline std::uint64_t parse_uint(const std::string& text) {
    std::uint64_t v = 0;
    const char* first = text.data();
    const char* last = first + text.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) throw InvalidInput("not a nonnegative integer: '" + text + "'");
    return v;
}

}  // namespace curvinit
