#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace darswin {

/// Deterministic RNG with explicit distributions. std::uniform_real_distribution
/// is implementation-defined, so draws are derived from raw mt19937_64 output
/// to keep CLI runs byte-identical across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    /// Box-Muller; one value per draw keeps the stream position predictable.
    double gaussian() {
        const double u1 = std::max(uniform(), 1e-300);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Truncated normal: resample until |x| <= 2 sigma.
    double trunc_normal(double sigma) {
        for (;;) {
            const double x = gaussian() * sigma;
            if (std::abs(x) <= 2.0 * sigma) return x;
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace darswin
