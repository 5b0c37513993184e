#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

namespace pvolab {

/// Shortest round-trip decimal form of a double. Keeps CSV output
/// deterministic and re-parse exact.
inline std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

} // namespace pvolab
