#pragma once

// Brute-force reference implementations used only by tests. They evaluate the
// formulas term by term with explicit cosine similarity and long double
// accumulation, sharing no code with the library.

#include <cmath>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline long double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// -1/(2B) sum_i log( exp(sim(z_i, z_i+)/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) )
inline long double infonce(const Rows& z, const std::vector<int>& positive, long double tau) {
    long double total = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        long double num = std::exp(cosine(z[i], z[static_cast<std::size_t>(positive[i])]) / tau);
        long double den = 0;
        for (std::size_t k = 0; k < z.size(); ++k)
            if (k != i) den += std::exp(cosine(z[i], z[k]) / tau);
        total += std::log(num / den);
    }
    return -total / static_cast<long double>(z.size());
}

// -1/B sum_i [ log softmax_j(sim(a_i, b_j)/tau)_i + log softmax_j(sim(b_i, a_j)/tau)_i ]
inline long double bidirectional(const Rows& a, const Rows& b, long double tau) {
    long double total = 0;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        long double den_ab = 0, den_ba = 0;
        for (std::size_t j = 0; j < n; ++j) {
            den_ab += std::exp(cosine(a[i], b[j]) / tau);
            den_ba += std::exp(cosine(b[i], a[j]) / tau);
        }
        total += std::log(std::exp(cosine(a[i], b[i]) / tau) / den_ab);
        total += std::log(std::exp(cosine(b[i], a[i]) / tau) / den_ba);
    }
    return -total / static_cast<long double>(n);
}

}  // namespace oracle
