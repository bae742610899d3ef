#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "stnet/shape.hpp"
#include "stnet/tensor.hpp"

namespace stnet {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 step over the combined value; used to derive named substreams.
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random stream. All randomness in the library (init, shuffles,
// dropout masks, synthetic data) flows through this wrapper so that a seed
// fully determines the run. Draws avoid std::uniform_*_distribution, whose
// output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection sampling over the top range keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    Tensor<T> uniform_tensor(Shape shape, T lo, T hi) {
        Tensor<T> t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
        return t;
    }

    // Derive an independent stream for a named purpose.
    Rng fork(std::uint64_t salt) { return Rng(mix_seed(gen_(), salt)); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// In-place Fisher-Yates with explicit draws; deterministic across platforms.
template <typename Seq>
void shuffle_deterministic(Seq& seq, Rng& rng) {
    if (seq.size() < 2) return;
    for (std::size_t i = seq.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i + 1));
        std::swap(seq[i], seq[j]);
    }
}

}  // namespace stnet
