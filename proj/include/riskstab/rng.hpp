#pragma once

// Deterministic random streams based on SplitMix64 (Steele, Lea & Flood 2014).
// Every source of randomness in the toolkit is a SplitMix64 stream whose seed
// is derived from (root seed, domain string, index), so results are exactly
// reproducible across platforms and across implementations of the same scheme.

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace riskstab {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a, used only for domain separation of stream names.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives a child seed from (root, domain, index). Each distinct triple gives
// an independent stream.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view domain,
                                 std::uint64_t index = 0) {
    std::uint64_t s = root;
    std::uint64_t a = splitmix64_next(s);
    s = a ^ fnv1a(domain);
    std::uint64_t b = splitmix64_next(s);
    s = b ^ index;
    return splitmix64_next(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). Rejection-free modulo bias is negligible for
    // the range sizes used here, but we reject anyway to keep the stream
    // well defined.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller. Consumes exactly two uniforms per call;
    // the sine branch is discarded so the draw count stays fixed.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

    // Poisson by Knuth's product method; adequate for the small means used in
    // feature generation.
    int next_poisson(double mean) {
        const double limit = std::exp(-mean);
        double p = 1.0;
        int k = 0;
        do {
            ++k;
            p *= next_double();
        } while (p > limit);
        return k - 1;
    }

    bool next_bernoulli(double p) { return next_double() < p; }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace riskstab
