#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace asdml {

/// Base exception for every recoverable failure raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad shapes, out-of-range parameters).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Iterative routine hit its cap, or a matrix was numerically unusable.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (ARFF, CSV, JSON documents).
class ParseError : public Error {
public:
    using Error::Error;
};

struct Warning {
    std::string code;
    std::string message;
};

/// Collects non-fatal conditions (zero denominators, clamped grid values, ...)
/// so that callers can surface them without aborting a run.
struct Diagnostics {
    std::vector<Warning> warnings;

    void warn(std::string code, std::string message) {
        warnings.push_back({std::move(code), std::move(message)});
    }
    bool has(std::string_view code) const {
        for (const auto& w : warnings)
            if (w.code == code) return true;
        return false;
    }
};

inline void warn(Diagnostics* diag, std::string code, std::string message) {
    if (diag) diag->warn(std::move(code), std::move(message));
}

/// 64-bit FNV-1a; used to identify manifests and preprocessing pipelines.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}  // namespace asdml
