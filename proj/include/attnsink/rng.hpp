#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace attnsink {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random stream. Sampling is implemented on top of raw u64
// draws only, so corpora are bit-identical for a given seed on any platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

    // Substream for one sentence: parallel generation equals sequential.
    static Rng for_sentence(uint64_t seed, int64_t sentence_id) {
        return Rng(splitmix64(seed) ^ splitmix64(0x5717u + static_cast<uint64_t>(sentence_id)));
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1], safe as a log() argument.
    double uniform01_open() { return 1.0 - uniform01(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Inclusive integer range.
    uint64_t uniform_int(uint64_t lo, uint64_t hi) {
        const uint64_t span = hi - lo + 1;
        return lo + next_u64() % span;
    }

    // Box-Muller; draws exactly two uniforms per call.
    double normal() {
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Marsaglia-Tsang gamma(alpha, 1); boosted for alpha < 1.
    double gamma(double alpha) {
        if (alpha < 1.0) {
            const double u = uniform01_open();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01_open();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    // Symmetric Dirichlet(alpha) sample of dimension k.
    std::vector<double> dirichlet(double alpha, size_t k) {
        std::vector<double> w(k);
        double sum = 0.0;
        for (size_t i = 0; i < k; ++i) {
            w[i] = gamma(alpha);
            sum += w[i];
        }
        for (double& x : w) x /= sum;
        return w;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace attnsink
