#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

namespace advlab {

// splitmix64 step; also used to derive independent substreams.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic, platform-independent PRNG (xoshiro256++ seeded via
// splitmix64). All randomness in the project flows through this type so
// that runs are reproducible bit-for-bit from a single 64-bit seed.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the pair is consumed eagerly so the
    // stream position only depends on how many values were drawn.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n) by rejection (no modulo bias).
    uint64_t uniform_int(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates permutation of {0, ..., n-1}.
    std::vector<int64_t> permutation(int64_t n) {
        std::vector<int64_t> p(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
        for (int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<int64_t>(uniform_int(uint64_t(i) + 1));
            std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
        }
        return p;
    }

    // Derives a decorrelated child seed from a seed and a tag path,
    // e.g. derive(seed, {kAttack, epoch, batch}). Used to give every
    // consumer (init, shuffle, attack, eval) a private stream so adding
    // or removing one consumer never shifts another's draws.
    static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> path) {
        uint64_t s = seed ^ 0x6a09e667f3bcc908ull;
        splitmix64(s);
        for (uint64_t p : path) {
            s ^= p + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
            splitmix64(s);
        }
        return splitmix64(s);
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stream tags for Rng::derive.
namespace stream {
inline constexpr uint64_t kInit = 0x01;
inline constexpr uint64_t kShuffle = 0x02;
inline constexpr uint64_t kAttack = 0x03;
inline constexpr uint64_t kEvalTest = 0x04;
inline constexpr uint64_t kEvalTrain = 0x05;
inline constexpr uint64_t kData = 0x06;
inline constexpr uint64_t kPseudo = 0x07;
}  // namespace stream

}  // namespace advlab
