#pragma once

#include <cstdint>
#include <random>

namespace gaq {

namespace detail {
/// splitmix64 finaliser, used to decorrelate derived seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Thin deterministic wrapper around mt19937_64. All randomness in the
/// project flows through this type so that a run is reproducible from a
/// single seed. Distribution code is hand-rolled because the standard
/// library distributions are not bit-stable across implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [lo, hi] inclusive, via rejection sampling
    /// (unbiased for any range).
    int uniform_int(int lo, int hi) {
        if (hi < lo) return lo;
        const uint64_t range = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<int>(x % range);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Derive an independent stream. Forking from the stored seed (not the
    /// current state) means fork(tag) is stable no matter how many draws
    /// the parent has made.
    Rng fork(uint64_t tag) const { return Rng(detail::mix64(seed_ ^ detail::mix64(tag))); }

    Rng fork(uint64_t tag_a, uint64_t tag_b) const {
        return Rng(detail::mix64(detail::mix64(seed_ ^ detail::mix64(tag_a)) ^ detail::mix64(tag_b)));
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace gaq
