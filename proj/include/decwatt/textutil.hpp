#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <system_error>

#include "decwatt/errors.hpp"

namespace decwatt {

/// Shortest round-trip decimal form. Deterministic, exact, locale-free.
inline std::string format_double(double x) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError(Errc::MalformedLine, context + ": not a number: '" + std::string(s) + "'");
    return out;
}

inline long long parse_int(std::string_view s, const std::string& context) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError(Errc::MalformedLine, context + ": not an integer: '" + std::string(s) + "'");
    return out;
}

} // namespace decwatt
