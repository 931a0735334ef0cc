#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace estrisk {

// All floating-point output (CSV, JSON, digests) goes through this single
// 17-significant-digit formatter so emitted files are byte-stable and
// round-trip to the exact double.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Input/configuration problems (bad config file, malformed CSV, invalid
// parameter combinations supplied by the caller). CLI maps these to exit 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures detected while computing (non-convergence, singular
// shrunk covariance, invalid RMT regime). CLI maps these to exit 2.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace estrisk
