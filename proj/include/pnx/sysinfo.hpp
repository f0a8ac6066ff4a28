#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>

namespace pnx::sysinfo {

// "model name x N" from /proc/cpuinfo, or a portable fallback.
inline std::string hardware_descriptor() {
    std::string model = "unknown-cpu";
    std::ifstream f("/proc/cpuinfo");
    std::string line;
    while (std::getline(f, line)) {
        auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        if (line.compare(0, 10, "model name") == 0) {
            size_t b = line.find_first_not_of(" \t", colon + 1);
            if (b != std::string::npos) model = line.substr(b);
            break;
        }
    }
    unsigned n = std::thread::hardware_concurrency();
    if (n > 0) model += " x" + std::to_string(n);
    return model;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                  tm.tm_min, tm.tm_sec);
    return buf;
}

inline std::string source_rev() {
#ifdef PNX_SOURCE_REV
    return PNX_SOURCE_REV;
#else
    return "unknown";
#endif
}

}  // namespace pnx::sysinfo
