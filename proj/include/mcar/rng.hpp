#pragma once

// Deterministic, platform-independent RNG with cheap stream splitting.
// std::mt19937 is avoided because the standard distributions are not
// bit-reproducible across library implementations; everything downstream
// (bootstrap p-values, power-study CSVs) must replay exactly from a seed.

#include <array>
#include <cstdint>
#include <vector>

namespace mcar {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // rejection-free modulo bias is negligible for our n, but stay exact
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> s_{};
};

// Stream key for a derived substream, e.g. one bootstrap replicate.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t state = seed ^ (index + 1);
    return splitmix64(state);
}

// n draws from the discrete distribution `prob` (need not be normalized);
// returns per-cell counts.
inline std::vector<std::int64_t> sample_counts(const std::vector<double>& prob,
                                               std::int64_t n, Rng& rng) {
    std::vector<double> cdf(prob.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        acc += prob[i];
        cdf[i] = acc;
    }
    std::vector<std::int64_t> counts(prob.size(), 0);
    for (std::int64_t k = 0; k < n; ++k) {
        const double u = rng.next_double() * acc;
        std::size_t lo = 0, hi = prob.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (u < cdf[mid]) hi = mid; else lo = mid + 1;
        }
        ++counts[lo];
    }
    return counts;
}

}  // namespace mcar
