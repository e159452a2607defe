#pragma once

#include <cstdint>
#include <stdexcept>

namespace reprobe {

// SplitMix64 (Steele, Lea & Flood 2014). 64-bit state, one multiply-xorshift
// chain per draw. Chosen over std::mt19937 because the output stream is fixed
// by the algorithm, not by the standard library implementation, so seeded runs
// replicate across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) {
            throw std::invalid_argument("SplitMix64::below: bound must be positive");
        }
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    // Uniform double in [0, 1) with 53 significant bits.
    double uniform01() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

// Deterministic seed splitting: child streams for (root, stream) pairs are
// decorrelated by one SplitMix64 step over a mixed key. Used everywhere a
// root seed fans out into per-sample or per-copy streams.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
    SplitMix64 rng(root ^ (0x632be59bd9b4e019ull * (stream + 1)));
    return rng.next();
}

} // namespace reprobe
