#pragma once

#include <cmath>
#include <cstdint>

namespace selfsense {

// splitmix64 step. Stable across platforms, which is what keeps datasets
// byte-identical for a given seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Mixes a key into a seed to derive a decorrelated child stream.
inline uint64_t mix64(uint64_t seed, uint64_t key) {
    uint64_t s = seed ^ (0xbf58476d1ce4e5b9ull + (key << 6) + (key >> 2));
    uint64_t a = splitmix64(s);
    s ^= key;
    return a ^ splitmix64(s);
}

inline uint64_t mix64(uint64_t seed, uint64_t k1, uint64_t k2) {
    return mix64(mix64(seed, k1), k2);
}

// Small counter-based generator. Every sample, parameter tensor and shuffle
// gets its own stream via mix64, so generation order never matters.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0x6a09e667f3bcc909ull) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniform_float(float lo, float hi) {
        return static_cast<float>(uniform(lo, hi));
    }

    // [lo, hi] inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller without caching; two draws per call keeps streams stateless
    // enough to reason about.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    uint64_t state_;
};

}  // namespace selfsense
