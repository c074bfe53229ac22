#pragma once

#include <cstdint>
#include <random>

namespace qdqn {

// All stochastic components draw from a mt19937_64 through the helpers
// below. Uniform doubles are produced from raw engine output instead of
// std::uniform_real_distribution so that traces are identical across
// standard libraries.
using Rng = std::mt19937_64;

// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform_in(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

// splitmix64 finalizer; used to derive uncorrelated per-worker seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace qdqn
