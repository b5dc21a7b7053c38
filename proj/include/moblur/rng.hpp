#pragma once

#include <cmath>
#include <cstdint>

namespace moblur {

// mt19937_64 with hand-rolled distributions. std:: distributions are
// implementation-defined, which would break cross-platform reproducibility of
// manifests and frozen test values.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : s_{seed ? seed : 0x9e3779b97f4a7c15ull} {
        // splitmix64 warmup to decorrelate small seeds
        for (int i = 0; i < 4; ++i) next();
    }

    std::uint64_t next() {
        std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }

    double normal() {
        // Box-Muller; second value discarded for simplicity
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    Rng fork() { return Rng(next()); }

private:
    std::uint64_t s_;
};

}  // namespace moblur
