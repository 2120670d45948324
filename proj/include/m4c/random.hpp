#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace m4c {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

using Engine = std::mt19937_64;

/// Global seed plus a sample index. The engine for sample i depends only on
/// (seed, i), so disjoint index ranges give independent substreams.
struct SampleStream {
    std::uint64_t seed = 0;
    std::uint64_t index = 0;

    Engine engine_for(std::uint64_t i) const {
        const std::uint64_t a = splitmix64(seed ^ 0x6A09E667F3BCC909ULL);
        const std::uint64_t b = splitmix64(i + 0xBB67AE8584CAA73BULL);
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        return Engine(seq);
    }

    Engine engine() const { return engine_for(index); }

    // Take the engine for the current index and advance the counter.
    Engine next() { return engine_for(index++); }

    /// A stream rooted at a derived seed, for independent purposes sharing one user seed.
    SampleStream fork(std::uint64_t salt) const { return {splitmix64(seed ^ splitmix64(salt)), 0}; }
};

inline double uniform(Engine& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline long uniform_int(Engine& rng, long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); }

inline bool bernoulli(Engine& rng, double p) { return std::bernoulli_distribution(p)(rng); }

inline double log_uniform(Engine& rng, double lo, double hi) {
    return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

inline double standard_normal(Engine& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace m4c
