#pragma once

#include <charconv>
#include <string>
#include <string_view>

#include "shapednet/errors.hpp"

namespace shapednet {

// Shortest round-trip decimal representation; the same double always formats
// to the same byte sequence, which keeps manifests, logs and reports
// reproducible across runs.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// Strict parser: the whole token must be consumed.
inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("not a number: '" + std::string(s) + "'");
    return v;
}

inline int64_t parse_int(std::string_view s) {
    int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("not an integer: '" + std::string(s) + "'");
    return v;
}

}  // namespace shapednet
