#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace citynav {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    return splitmix64(s);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Deterministic stream, stable across platforms and standard libraries.
// Episode logs must be byte-identical per seed, so no std:: distributions here.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next() { return splitmix64(state); }

    // Independent child stream; does not advance this stream.
    Rng fork(std::uint64_t tag) const { return Rng(mix64(state, tag)); }

    double uniform01() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        // rejection sampling, unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next();
        while (v >= limit) v = next();
        return v % n;
    }

    double normal() {
        // Box-Muller; u1 in (0,1]
        double u1 = 1.0 - uniform01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // exp(N(0, sigma)): median 1, multiplicative noise
    double lognormal_factor(double sigma) { return std::exp(sigma * normal()); }
};

} // namespace citynav
