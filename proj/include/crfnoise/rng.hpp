#pragma once

#include <cmath>
#include <cstdint>

namespace crfnoise {

// Counter-based RNG: every stream is derived by hashing a key tuple, so
// draws depend only on (seed, tags) and not on evaluation order. Streams
// for distinct keys are independent for practical purposes.
namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

class Rng {
  public:
    explicit Rng(uint64_t state) : state_(state) {}

    static Rng from_key(uint64_t seed, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0,
                        uint64_t d = 0) {
        uint64_t s = detail::splitmix64(seed);
        s = detail::splitmix64(s ^ detail::splitmix64(a + 0x1000000001ULL));
        s = detail::splitmix64(s ^ detail::splitmix64(b + 0x2000000003ULL));
        s = detail::splitmix64(s ^ detail::splitmix64(c + 0x3000000005ULL));
        s = detail::splitmix64(s ^ detail::splitmix64(d + 0x4000000007ULL));
        return Rng(s);
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Index in [0, n).
    uint64_t index(uint64_t n) { return next_u64() % n; }

    double normal() {
        // Box-Muller; second value discarded to keep the stream stateless-ish.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    uint64_t state_;
};

}  // namespace crfnoise
