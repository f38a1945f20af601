#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nova {

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a) {
    return mix64(base ^ mix64(a + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

using Rng = std::mt19937_64;

/// Standard normal truncated to [-2, 2], rejection sampled.
template <typename Gen>
double truncated_normal(Gen& gen, double stddev) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        double z = normal(gen);
        if (z >= -2.0 && z <= 2.0) return z * stddev;
    }
}

}  // namespace nova
