#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace abcsmc {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random stream. All stochastic code draws through this class so
// that draw order is explicit and runs replay bitwise. Substreams are keyed by
// (seed, a, b, c); the SMC driver uses (run seed, iteration, phase, particle)
// so results do not depend on worker count.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    static RandomStream substream(std::uint64_t seed, std::uint64_t a,
                                  std::uint64_t b, std::uint64_t c) {
        std::uint64_t h = splitmix64(seed);
        h = splitmix64(h ^ a);
        h = splitmix64(h ^ b);
        h = splitmix64(h ^ c);
        return RandomStream(h);
    }

    // in [0, 1)
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Box-Muller, two uniforms per draw, no cached spare.
    double normal() {
        double u1 = 1.0 - uniform01();  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate) {
        return -std::log(1.0 - uniform01()) / rate;
    }

    // Bernoulli-sum; exact and adequate for the population sizes used here.
    long binomial(long n, double p) {
        if (p <= 0.0) return 0;
        if (p >= 1.0) return n;
        long k = 0;
        for (long i = 0; i < n; ++i)
            if (uniform01() < p) ++k;
        return k;
    }

    // Knuth multiplication method; mean stays far below the exp underflow edge.
    long poisson(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        long k = 0;
        double prod = uniform01();
        while (prod > limit) {
            ++k;
            prod *= uniform01();
        }
        return k;
    }

    std::size_t uniform_index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace abcsmc
