#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace depthshape {

/// Seedable random generator used everywhere results must reproduce bitwise
/// across platforms. The engine is std::mt19937_64 (fully specified by the
/// standard); all distributions are derived from its raw output here instead
/// of through std::uniform_real_distribution et al., whose mappings are
/// implementation-defined.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] via rejection sampling (unbiased).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<int64_t>(engine_()); // full 64-bit span
        const uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t draw;
        do {
            draw = engine_();
        } while (draw >= limit);
        return lo + static_cast<int64_t>(draw % range);
    }

    /// Standard normal via Box-Muller on uniform draws.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates shuffle (std::shuffle is not portable across libraries).
    template <typename T>
    void shuffle(std::vector<T> &items) {
        for (size_t i = items.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Sample k distinct indices from [0, n) without replacement.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        shuffle(pool);
        pool.resize(static_cast<size_t>(k < n ? k : n));
        return pool;
    }

    /// Deterministically derive an independent stream seed (splitmix64 mix).
    static uint64_t derive_seed(uint64_t seed, uint64_t stream) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace depthshape
