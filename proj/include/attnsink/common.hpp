#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace attnsink {

// Formats a double with 6 significant digits, the precision used in all
// emitted JSON/CSV reports.
inline std::string format_g6(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

// Rounds to the value that format_g6 would print, so numbers stored in JSON
// documents serialize to the same 6-significant-digit form.
inline double round_g6(double x) {
    return std::strtod(format_g6(x).c_str(), nullptr);
}

}  // namespace attnsink
