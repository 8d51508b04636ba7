#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace iace {

// Deterministic PRNG used everywhere randomness is needed. std::mt19937 with
// std::uniform_*_distribution is not bit-stable across standard libraries, so
// we keep the whole chain (generator + distributions) under our control.
// Core generator is splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution.
    double next_double();
    // Unbiased uniform integer in [0, n); rejection sampling.
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller (two uniforms per draw, no caching).
    double next_normal();

    std::vector<double> normal_vector(std::size_t n, double scale = 1.0);

    // Fisher-Yates over indices 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t state_;
};

std::uint64_t fnv1a64(std::string_view s);

// Named substream derivation: one experiment seed fans out into per-purpose
// streams, e.g. derive_seed(seed, "sampler").
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

}  // namespace iace
