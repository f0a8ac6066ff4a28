#pragma once

#include <iomanip>
#include <locale>
#include <sstream>
#include <string>

namespace pnx::textfmt {

// Fixed-point formatting pinned to the classic locale so emitted tables are
// byte-identical regardless of the host's LC_NUMERIC.
inline std::string fixed(double v, int precision = 6) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

// Shortest general formatting, same locale pinning.
inline std::string general(double v, int precision = 12) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(precision) << v;
    return os.str();
}

}  // namespace pnx::textfmt
