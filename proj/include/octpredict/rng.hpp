#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace oct {

// Seed mixer; also used to derive independent substreams from (seed, ids...).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Self-contained xoshiro256** stream. We do not use <random> distributions so
// draws are bit-stable across standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : s_) w = splitmix64(s);
    }

    static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t s = seed;
        std::uint64_t m = splitmix64(s);
        s ^= a * 0x9e3779b97f4a7c15ULL;
        m ^= splitmix64(s);
        s ^= b * 0xc2b2ae3d27d4eb4fULL;
        m ^= splitmix64(s);
        s ^= c * 0x165667b19e3779f9ULL;
        m ^= splitmix64(s);
        return Rng(m);
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

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::int64_t uniform_int(std::int64_t n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal, Box-Muller
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape k, scale theta), Marsaglia-Tsang
    double gamma(double k, double theta) {
        if (k <= 0.0 || theta <= 0.0) throw std::invalid_argument("gamma: parameters must be positive");
        if (k < 1.0) {
            const double u = std::max(uniform(), 1e-300);
            return gamma(k + 1.0, theta) * std::pow(u, 1.0 / k);
        }
        const double d = k - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = std::max(uniform(), 1e-300);
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v * theta;
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4] = {};
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace oct
