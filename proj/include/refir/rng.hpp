#pragma once

#include <cstdint>
#include <random>

namespace refir {

// Seeded generator with hand-rolled distributions so that streams are
// identical across standard libraries (std::normal_distribution is
// implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // modulo bias is irrelevant for our n << 2^64
        return eng_() % n;
    }

    // Standard normal via Box-Muller, pairs cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(float* out, std::size_t n, float mean = 0.f, float stddev = 1.f) {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = mean + stddev * static_cast<float>(normal());
    }

    // Child stream derived from this one; used to give independent,
    // reproducible seeds to sub-tasks.
    std::uint64_t derive() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace refir
