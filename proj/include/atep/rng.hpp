#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace atep {

// Deterministic counter-based random streams. Every stochastic choice in the
// pipeline draws from a stream keyed by (seed, purpose tag, index), so results
// reproduce bit-for-bit across platforms and thread schedules. The core step
// is the splitmix64 finalizer; std::* distributions are avoided on purpose
// (their output is implementation-defined).

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive the seed of a sub-stream from a parent seed, a purpose tag and an
/// index. Chaining derive_seed calls yields independent named streams.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(mix64(h) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}
    Rng(uint64_t seed, std::string_view tag, uint64_t index = 0)
        : state_(derive_seed(seed, tag, index)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive, unbiased (Lemire rejection).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = uint64_t(hi - lo) + 1;
        if (range == 0) return int64_t(next_u64());  // full 64-bit span
        __uint128_t m = __uint128_t(next_u64()) * range;
        uint64_t low = uint64_t(m);
        if (low < range) {
            uint64_t threshold = (0 - range) % range;
            while (low < threshold) {
                m = __uint128_t(next_u64()) * range;
                low = uint64_t(m);
            }
        }
        return lo + int64_t(uint64_t(m >> 64));
    }

    /// Log-uniform integer in [lo, hi]; both bounds must be positive.
    int64_t log_uniform_int(int64_t lo, int64_t hi) {
        double u = uniform(std::log(double(lo)), std::log(double(hi) + 1.0));
        int64_t v = int64_t(std::exp(u));
        return v < lo ? lo : (v > hi ? hi : v);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Sample k distinct indices from [0, n) without replacement
    /// (partial Fisher-Yates), returned in draw order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        if (k > n) k = n;
        std::vector<int> out(k);
        for (int i = 0; i < k; ++i) {
            int j = i + int(uniform_int(0, n - 1 - i));
            std::swap(pool[i], pool[j]);
            out[i] = pool[i];
        }
        return out;
    }

private:
    uint64_t state_;
};

}  // namespace atep
