#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace calad {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Combines values into a derived 64-bit seed. Used for per-stage, per-window
// and per-entity substreams.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return detail::mix64(h ^ (detail::mix64(v) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}

inline std::uint64_t hash_str(const std::string& s) {
    // FNV-1a.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Counter-based generator: output i is splitmix64 applied to the i-th state
// increment from the seed. Identical (seed, draw sequence) gives identical
// outputs on every platform; there is no hidden state beyond the counter.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        counter_ += 1;
        return detail::mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller (one value per pair of draws).
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        // Avoid log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t rem = (~std::uint64_t{0}) % n;
        const std::uint64_t limit = (~std::uint64_t{0}) - rem;
        for (;;) {
            std::uint64_t x = next_u64();
            if (x <= limit) return x % n;
        }
    }

    // Independent derived stream; the parent stream is not advanced.
    Prng substream(std::uint64_t a) const { return Prng(hash_combine(seed_, a)); }
    Prng substream(std::uint64_t a, std::uint64_t b) const {
        return Prng(hash_combine(hash_combine(seed_, a), b));
    }
    Prng substream(const std::string& label) const { return Prng(hash_combine(seed_, hash_str(label))); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace calad
