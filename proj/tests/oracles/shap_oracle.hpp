#pragma once

#include <vector>

#include "prorad/gbt.hpp"

namespace prorad::oracle {

// Conditional expectation of one tree when only the features in `known` (bitmask) are
// taken from x; unknown splits average their children by cover.
inline double conditional(const Tree& t, int node, const std::vector<double>& x, unsigned known) {
    const TreeNode& n = t.nodes[node];
    if (n.is_leaf()) return n.weight;
    if (known >> n.feature & 1u) return conditional(t, x[n.feature] < n.threshold ? n.left : n.right, x, known);
    const double cl = t.nodes[n.left].cover, cr = t.nodes[n.right].cover;
    return (cl * conditional(t, n.left, x, known) + cr * conditional(t, n.right, x, known)) / n.cover;
}

inline double value(const TreeEnsemble& e, const std::vector<double>& x, unsigned known) {
    double v = e.base_margin;
    for (const auto& t : e.trees) v += conditional(t, 0, x, known);
    return v;
}

inline std::vector<double> brute_force_shapley(const TreeEnsemble& e, const std::vector<double>& x) {
    const int d = static_cast<int>(e.width());
    std::vector<double> fact(d + 1, 1.0);
    for (int i = 1; i <= d; ++i) fact[i] = fact[i - 1] * i;
    std::vector<double> phi(d, 0.0);
    for (int i = 0; i < d; ++i)
        for (unsigned s = 0; s < (1u << d); ++s) {
            if (s >> i & 1u) continue;
            const int size = __builtin_popcount(s);
            const double w = fact[size] * fact[d - size - 1] / fact[d];
            phi[i] += w * (value(e, x, s | (1u << i)) - value(e, x, s));
        }
    return phi;
}

}  // namespace prorad::oracle
