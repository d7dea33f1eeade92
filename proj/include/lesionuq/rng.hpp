// rng.hpp - deterministic random number generation.
//
// All randomness in the toolkit flows through Xoshiro256StarStar seeded via
// splitmix64. std::mt19937 plus the std distributions would be simpler, but
// the distributions are not pinned by the standard and differ between
// standard libraries; scene generation promises bit-identical output for a
// given seed on every platform, so both the generator and every derived
// draw are spelled out here.
//
// Draw discipline:
//   * next_u64()    - one raw 64-bit word.
//   * uniform()     - exactly one word, mapped to [0,1) as (x >> 11) * 2^-53.
//   * uniform(a,b)  - one word, affine map. a + u * (b - a).
//   * uniform_int(lo,hi) - one word via Lemire-free modulo of the 53-bit
//                     uniform (bias < 2^-40 for the tiny ranges we use,
//                     and exactly reproducible, which is what matters here).
//   * normal_ih12() - exactly twelve words: Irwin-Hall sum of 12 uniforms
//                     minus 6. Mean 0, variance 1, support [-6,6]. Chosen
//                     over Box-Muller because it needs no libm calls, so the
//                     result is bit-identical across platforms.
//   * normal_bm()   - exactly two words, Box-Muller. A true Gaussian for the
//                     places that want real tails (network noise injection);
//                     deterministic for a fixed libm but not guaranteed
//                     bit-identical across platforms.
#pragma once

#include <cmath>
#include <cstdint>

#include "lesionuq/errors.hpp"

namespace lesionuq {

// splitmix64: expands one seed word into a well-mixed stream. Used only to
// initialise the main generator's state.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

class Xoshiro256StarStar {
public:
    explicit Xoshiro256StarStar(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // One draw, in [0,1). 53 significant bits, exact IEEE arithmetic.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // One draw, in [a,b). Requires a <= b.
    double uniform(double a, double b) {
        if (!(a <= b)) throw argument_error("uniform(a,b): requires a <= b");
        return a + uniform() * (b - a);
    }

    // One draw, integer in [lo,hi] inclusive. Requires lo <= hi.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw argument_error("uniform_int: requires lo <= hi");
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    // One draw, true with probability p.
    bool bernoulli(double p) { return uniform() < p; }

    // Twelve draws. Approximate standard normal, bit-stable everywhere.
    double normal_ih12() {
        double acc = 0.0;
        for (int i = 0; i < 12; ++i) acc += uniform();
        return acc - 6.0;
    }

    // Exactly two draws. Box-Muller standard normal.
    double normal_bm() {
        const double u1 = uniform();
        const double u2 = uniform();
        // Guard u1 == 0; log(0) would be -inf. Smallest nonzero uniform is
        // 2^-53, reuse it as the floor.
        const double r = std::sqrt(-2.0 * std::log(u1 > 0.0 ? u1 : 0x1.0p-53));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

} // namespace lesionuq
