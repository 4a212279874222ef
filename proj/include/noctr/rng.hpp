#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace noctr {

/// Deterministic random source. All draws go through explicit conversions of
/// raw mt19937_64 output, so sequences are identical across platforms and
/// standard-library implementations (uniform_real_distribution et al. are
/// implementation-defined and deliberately avoided).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Unbiased uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_below(std::uint64_t bound) {
        // Lemire's multiply-shift rejection method.
        std::uint64_t x = engine_();
        __uint128_t m = static_cast<__uint128_t>(x) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            std::uint64_t threshold = (0ULL - bound) % bound;
            while (lo < threshold) {
                x = engine_();
                m = static_cast<__uint128_t>(x) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Derive a child seed for a named stream (mask, init, batching, ...)
    /// so components draw from independent deterministic sequences.
    static std::uint64_t derive(std::uint64_t seed, std::string_view stream) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (char c : stream) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        // splitmix64 finalizer over the combined state
        std::uint64_t z = seed ^ h;
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace noctr
