#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "prorad/metrics.hpp"

namespace prorad::oracle {

inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
                den += 1;
            }
    return num / den;
}

struct Fixture {
    std::vector<double> a, b;
    std::vector<int> y;
};

inline Fixture paired_fixture(std::uint64_t seed, int n, double shift_a = 1.0, double shift_b = 0.6) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Fixture f;
    for (int i = 0; i < n; ++i) {
        const int y = i % 2;
        const double shared = nd(rng);
        f.y.push_back(y);
        f.a.push_back(y * shift_a + 0.6 * shared + 0.8 * nd(rng));
        f.b.push_back(y * shift_b + 0.6 * shared + 0.8 * nd(rng));
    }
    return f;
}

// Paired permutation test: swapping the two scorers within a subject is exchangeable
// under H0 of equal AUC.
inline double permutation_p(const Fixture& f, int perms, std::uint64_t seed) {
    const double obs = std::abs(pairwise_auc(f.a, f.y) - pairwise_auc(f.b, f.y));
    std::mt19937_64 rng(seed);
    std::vector<double> a(f.a.size()), b(f.b.size());
    int extreme = 0;
    for (int p = 0; p < perms; ++p) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const bool swap = rng() & 1u;
            a[i] = swap ? f.b[i] : f.a[i];
            b[i] = swap ? f.a[i] : f.b[i];
        }
        if (std::abs(auroc(a, f.y) - auroc(b, f.y)) >= obs - 1e-12) ++extreme;
    }
    return static_cast<double>(extreme) / perms;
}

}  // namespace prorad::oracle
