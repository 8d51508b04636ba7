#include "rng.hpp"

#include <cmath>
#include <numbers>

#include "errors.hpp"

namespace iace {

std::uint64_t Rng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014)
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw_invalid("Rng::below: n must be positive");
    const std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

double Rng::next_normal() {
    // Box-Muller; u1 nudged away from 0 so log() stays finite.
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> Rng::normal_vector(std::size_t n, double scale) {
    std::vector<double> out(n);
    for (auto& x : out) x = scale * next_normal();
    return out;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    Rng mix(base ^ fnv1a64(label));
    return mix.next_u64();
}

}  // namespace iace
