// Deterministic, platform-independent random streams (splitmix64).
#pragma once

#include <cstdint>

namespace kc::rng {

struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // Uniform in [0, 1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }
    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }
    // Rademacher +/-1.
    double sign() { return (next() & 1) ? 1.0 : -1.0; }
};

// Derives an independent substream seed; used for prefix-stable per-sample
// streams (sample i's input does not depend on the total budget).
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 s(seed ^ (0xa0761d6478bd642fULL + index * 0xe7037ed1a0b428dbULL));
    return s.next();
}

}  // namespace kc::rng
