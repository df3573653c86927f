#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace phenovlp {

// Seeded random source. Distributions are derived from raw mt19937_64 output
// directly so sequences are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n);

    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // k distinct indices from [0, n), in sampling order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    // Independent child stream, for handing to a sub-component.
    Rng fork() { return Rng(next_u64() ^ 0x9E3779B97F4A7C15ULL); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace phenovlp
