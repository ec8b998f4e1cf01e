#pragma once

// Counter-based splittable random streams. Each stream is identified by a
// 64-bit key; drawing the n-th value hashes (key, n), so a stream's output
// never depends on how many values sibling streams have consumed. Substreams
// are derived by label or index, which keeps every stochastic draw in the
// simulator attributable to a named purpose.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dfcaptcha {

namespace detail {

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

class RngStream {
public:
    explicit RngStream(std::uint64_t key) : key_(key) {}

    std::uint64_t key() const noexcept { return key_; }

    std::uint64_t next_u64() {
        return detail::mix64(key_ ^ (0x9E3779B97F4A7C15ULL * ++counter_));
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes exactly two words per call.
    double next_gaussian() {
        const double u1 = 1.0 - next_unit(); // (0, 1], keeps log finite
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Child streams; neither consumes from nor perturbs the parent.
    RngStream split(std::string_view label) const {
        return RngStream(detail::mix64(key_ ^ 0xA24BAED4963EE407ULL ^ detail::fnv1a64(label)));
    }
    RngStream split(std::uint64_t index) const {
        return RngStream(detail::mix64(key_ ^ 0x9FB21C651E98DF25ULL ^ detail::mix64(index)));
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace dfcaptcha
