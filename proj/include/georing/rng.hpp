// Deterministic pseudo-random streams (xoshiro256++ seeded via splitmix64).
// The standard <random> distributions are implementation-defined, so every
// draw used by the simulator goes through this header to keep runs
// reproducible bit-for-bit.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace georing {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stateless 64-bit mix, handy for deriving per-object seeds.
inline uint64_t hash_u64(uint64_t x) {
    uint64_t s = x;
    return splitmix64(s);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return hash_u64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// FNV-1a; used instead of std::hash so seeds are identical everywhere.
inline uint64_t hash_str(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed = 1) {
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n), rejection-sampled to stay unbiased.
    uint64_t next_below(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Standard normal via Box-Muller; caches the second deviate.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 1e-300) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // Knuth's product method; fine for the small rates used by churn.
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        double p = 1.0;
        int k = 0;
        do {
            ++k;
            p *= next_double();
        } while (p > limit);
        return k - 1;
    }

    // Derive an independent stream; same (seed, tag) always yields the same stream.
    Rng split(uint64_t tag) const {
        uint64_t s = hash_combine(state_[0] ^ state_[2], tag);
        return Rng(splitmix64(s));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace georing
