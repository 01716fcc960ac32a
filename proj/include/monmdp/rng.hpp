#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace monmdp {

/// SplitMix64 finalizer. Turns consecutive seeds into decorrelated 64-bit
/// states before they reach the Mersenne Twister.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-run random stream. Not shared between threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    double normal(double mean, double sd) {
        return std::normal_distribution<double>(mean, sd)(engine_);
    }

    std::uint64_t bits() { return engine_(); }

    /// Draws an index from a probability vector (assumed normalized).
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0) continue;
            acc += probs[i];
            last_positive = i;
            if (u < acc) return i;
        }
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace monmdp
