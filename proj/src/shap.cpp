#include "prorad/shap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prorad/error.hpp"
#include "prorad/parallel.hpp"

namespace prorad {

namespace {

struct PathElement {
    int feature;
    double zero_fraction;  // share of cover flowing this way when the feature is unknown
    double one_fraction;   // 1 if the row follows this way, else 0
    double weight;
};

using Path = std::vector<PathElement>;

void extend(Path& p, int depth, double zero, double one, int feature) {
    p[depth] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
    for (int i = depth - 1; i >= 0; --i) {
        p[i + 1].weight += one * p[i].weight * (i + 1) / static_cast<double>(depth + 1);
        p[i].weight = zero * p[i].weight * (depth - i) / static_cast<double>(depth + 1);
    }
}

void unwind(Path& p, int depth, int index) {
    const double one = p[index].one_fraction, zero = p[index].zero_fraction;
    double next = p[depth].weight;
    for (int i = depth - 1; i >= 0; --i) {
        if (one != 0) {
            const double tmp = p[i].weight;
            p[i].weight = next * (depth + 1) / ((i + 1) * one);
            next = tmp - p[i].weight * zero * (depth - i) / static_cast<double>(depth + 1);
        } else {
            p[i].weight = p[i].weight * (depth + 1) / (zero * (depth - i));
        }
    }
    for (int i = index; i < depth; ++i) {
        p[i].feature = p[i + 1].feature;
        p[i].zero_fraction = p[i + 1].zero_fraction;
        p[i].one_fraction = p[i + 1].one_fraction;
    }
}

// Total path weight with element `index` removed, without modifying the path.
double unwound_sum(const Path& p, int depth, int index) {
    const double one = p[index].one_fraction, zero = p[index].zero_fraction;
    double next = p[depth].weight, total = 0;
    for (int i = depth - 1; i >= 0; --i) {
        if (one != 0) {
            const double tmp = next * (depth + 1) / ((i + 1) * one);
            total += tmp;
            next = p[i].weight - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
        } else if (zero != 0) {
            total += p[i].weight / zero / ((depth - i) / static_cast<double>(depth + 1));
        }
    }
    return total;
}

void recurse(const Tree& t, int node, const double* x, double* phi, Path path, int depth, double zero, double one,
             int feature) {
    path.resize(static_cast<std::size_t>(depth) + 1);
    extend(path, depth, zero, one, feature);
    const TreeNode& n = t.nodes[node];
    if (n.is_leaf()) {
        for (int i = 1; i <= depth; ++i) {
            const double w = unwound_sum(path, depth, i);
            phi[path[i].feature] += w * (path[i].one_fraction - path[i].zero_fraction) * n.weight;
        }
        return;
    }
    const double v = x[n.feature];
    const bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
    const int hot = go_left ? n.left : n.right, cold = go_left ? n.right : n.left;
    const double hot_zero = t.nodes[hot].cover / n.cover, cold_zero = t.nodes[cold].cover / n.cover;
    double in_zero = 1, in_one = 1;
    for (int k = 1; k <= depth; ++k)
        if (path[k].feature == n.feature) {
            in_zero = path[k].zero_fraction;
            in_one = path[k].one_fraction;
            unwind(path, depth, k);
            --depth;
            break;
        }
    recurse(t, hot, x, phi, path, depth + 1, hot_zero * in_zero, in_one, n.feature);
    recurse(t, cold, x, phi, path, depth + 1, cold_zero * in_zero, 0.0, n.feature);
}

double tree_expectation(const Tree& t, int node) {
    const TreeNode& n = t.nodes[node];
    if (n.is_leaf()) return n.weight;
    return (t.nodes[n.left].cover * tree_expectation(t, n.left) + t.nodes[n.right].cover * tree_expectation(t, n.right)) /
           n.cover;
}

void check_cover(const TreeEnsemble& ens) {
    for (std::size_t ti = 0; ti < ens.trees.size(); ++ti)
        for (const auto& n : ens.trees[ti].nodes)
            if (!(n.cover > 0))
                throw Error(ErrorCode::MissingCover, "tree " + std::to_string(ti) + " has a node without cover");
}

}  // namespace

double expected_margin(const TreeEnsemble& ens) {
    check_cover(ens);
    double m = ens.base_margin;
    for (const auto& t : ens.trees) m += tree_expectation(t, 0);
    return m;
}

ShapVector tree_shap(const TreeEnsemble& ens, std::span<const double> row) {
    if (row.size() != ens.width()) throw Error(ErrorCode::WidthMismatch, "row width does not match the model");
    ShapVector s;
    s.base = expected_margin(ens);
    s.phi.assign(ens.width(), 0.0);
    for (const auto& t : ens.trees) recurse(t, 0, row.data(), s.phi.data(), Path(1), 0, 1.0, 1.0, -1);
    return s;
}

std::vector<double> tree_shap_batch(const TreeEnsemble& ens, std::span<const double> rows, unsigned threads) {
    const std::size_t w = ens.width();
    if (w == 0 || rows.size() % w != 0) throw Error(ErrorCode::WidthMismatch, "row block is not a multiple of model width");
    check_cover(ens);
    const std::size_t n = rows.size() / w;
    std::vector<double> phi(rows.size(), 0.0);
    parallel_for(n, threads, [&](std::size_t r) {
        for (const auto& t : ens.trees) recurse(t, 0, rows.data() + r * w, phi.data() + r * w, Path(1), 0, 1.0, 1.0, -1);
    });
    return phi;
}

const char* to_string(LesionAggregation a) noexcept { return a == LesionAggregation::Mean ? "mean" : "max"; }

LesionAggregation lesion_aggregation_from_string(const std::string& s) {
    if (s == "mean") return LesionAggregation::Mean;
    if (s == "max") return LesionAggregation::Max;
    throw Error(ErrorCode::Config, "unknown lesion aggregation '" + s + "'");
}

LesionExplanation explain_lesion(const TreeEnsemble& ens, int lesion_id, std::span<const double> rows, int k,
                                 LesionAggregation agg, unsigned threads) {
    const std::size_t w = ens.width();
    if (rows.empty()) throw Error(ErrorCode::EmptyLesion, "lesion " + std::to_string(lesion_id) + " has no voxels");
    const auto phi = tree_shap_batch(ens, rows, threads);
    const std::size_t n = rows.size() / w;
    LesionExplanation e;
    e.lesion_id = lesion_id;
    e.voxels = n;
    e.base = expected_margin(ens);
    e.aggregation = agg;
    e.phi.assign(w, 0.0);
    e.abs_phi.assign(w, 0.0);
    for (std::size_t r = 0; r < n; ++r) e.mean_margin += ens.margin(rows.subspan(r * w, w));
    e.mean_margin /= static_cast<double>(n);
    for (std::size_t j = 0; j < w; ++j) {
        if (agg == LesionAggregation::Mean) {
            double s = 0, a = 0;
            for (std::size_t r = 0; r < n; ++r) {
                s += phi[r * w + j];
                a += std::abs(phi[r * w + j]);
            }
            e.phi[j] = s / static_cast<double>(n);
            e.abs_phi[j] = a / static_cast<double>(n);
        } else {
            for (std::size_t r = 0; r < n; ++r) {
                const double v = phi[r * w + j];
                if (std::abs(v) > e.abs_phi[j]) {
                    e.abs_phi[j] = std::abs(v);
                    e.phi[j] = v;
                }
            }
        }
    }
    std::vector<int> order(w);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return e.abs_phi[a] > e.abs_phi[b]; });
    order.resize(std::min<std::size_t>(w, static_cast<std::size_t>(std::max(0, k))));
    e.top = std::move(order);
    return e;
}

}  // namespace prorad
