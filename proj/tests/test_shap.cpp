#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "prorad/error.hpp"
#include "oracles/shap_oracle.hpp"
#include "prorad/shap.hpp"

using namespace prorad;
using namespace prorad::oracle;

namespace {

// Random full binary tree with consistent integer covers.
void grow(Tree& t, int node, int depth, int max_depth, int features, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    if (depth == max_depth || t.nodes[node].cover < 2 || rng() % 5 == 0) {
        t.nodes[node].weight = u(rng);
        return;
    }
    const int l = static_cast<int>(t.nodes.size());
    const double cover = t.nodes[node].cover;
    const double left_cover = 1 + static_cast<double>(rng() % static_cast<std::uint64_t>(cover - 1));
    t.nodes.emplace_back();
    t.nodes.emplace_back();
    TreeNode& n = t.nodes[node];
    n.feature = static_cast<int>(rng() % static_cast<std::uint64_t>(features));
    n.threshold = u(rng) * 0.8;
    n.left = l;
    n.right = l + 1;
    t.nodes[l].cover = left_cover;
    t.nodes[l + 1].cover = cover - left_cover;
    grow(t, l, depth + 1, max_depth, features, rng);
    grow(t, l + 1, depth + 1, max_depth, features, rng);
}

TreeEnsemble random_ensemble(std::uint64_t seed, int features, int trees, int max_depth, int used_features = -1) {
    std::mt19937_64 rng(seed);
    TreeEnsemble e;
    for (int j = 0; j < features; ++j) e.feature_names.push_back("f" + std::to_string(j));
    e.base_margin = 0.3;
    for (int k = 0; k < trees; ++k) {
        Tree t;
        t.nodes.emplace_back();
        t.nodes[0].cover = 50 + static_cast<double>(rng() % 200);
        grow(t, 0, 0, max_depth, used_features > 0 ? used_features : features, rng);
        e.trees.push_back(std::move(t));
    }
    return e;
}

std::vector<double> random_row(std::mt19937_64& rng, int d) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(d);
    for (auto& v : x) v = u(rng);
    return x;
}

Dataset training_data(std::uint64_t seed, std::size_t rows, std::size_t width) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Dataset d;
    d.width = width;
    for (std::size_t j = 0; j < width; ++j) d.feature_names.push_back("f" + std::to_string(j));
    std::vector<double> row(width);
    for (std::size_t r = 0; r < rows; ++r) {
        for (auto& v : row) v = nd(rng);
        d.append(row, row[0] + row[1] * row[2] + 0.5 * nd(rng) > 0 ? 1.0 : 0.0, "p");
    }
    return d;
}

}  // namespace

TEST(TreeShap, StumpDecomposition) {
    TreeEnsemble e;
    e.feature_names = {"a", "b", "c"};
    Tree t;
    t.nodes.resize(3);
    t.nodes[0] = {1, 0.5, 1, 2, true, 0.0, 1.0, 40.0};
    t.nodes[1].weight = -0.7;
    t.nodes[1].cover = 30;
    t.nodes[2].weight = 1.1;
    t.nodes[2].cover = 10;
    e.trees.push_back(t);
    const std::vector<double> x{9.0, 0.8, -3.0};
    const auto s = tree_shap(e, x);
    EXPECT_NEAR(s.phi[1], 1.1 - (30 * -0.7 + 10 * 1.1) / 40.0, 1e-15);
    EXPECT_EQ(s.phi[0], 0.0);
    EXPECT_EQ(s.phi[2], 0.0);
}

TEST(TreeShap, EmptyEnsemble) {
    TreeEnsemble e;
    e.feature_names = {"a", "b"};
    e.base_margin = -0.4;
    const auto s = tree_shap(e, std::vector<double>{1, 2});
    EXPECT_EQ(s.base, -0.4);
    EXPECT_EQ(s.phi, std::vector<double>(2, 0.0));
}

TEST(TreeShap, MatchesBruteForceShapley) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 2 + trial % 7;  // 2..8 features
        const auto e = random_ensemble(1000 + trial, d, 1 + trial % 5, 2 + trial % 5);
        for (int r = 0; r < 5; ++r) {
            const auto x = random_row(rng, d);
            const auto s = tree_shap(e, x);
            const auto oracle = brute_force_shapley(e, x);
            for (int j = 0; j < d; ++j) EXPECT_NEAR(s.phi[j], oracle[j], 1e-9) << "trial " << trial << " feature " << j;
            EXPECT_NEAR(s.base, value(e, x, 0u), 1e-12);
        }
    }
}

TEST(TreeShap, RepeatedFeatureAlongPath) {
    // Deep trees over 2 features force the same feature to reappear on a path.
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto e = random_ensemble(50 + trial, 2, 3, 6);
        const auto x = random_row(rng, 2);
        const auto s = tree_shap(e, x);
        const auto oracle = brute_force_shapley(e, x);
        EXPECT_NEAR(s.phi[0], oracle[0], 1e-9);
        EXPECT_NEAR(s.phi[1], oracle[1], 1e-9);
    }
}

TEST(TreeShap, AdditivityOnTrainedEnsemble) {
    const Dataset d = training_data(3, 800, 12);
    TrainConfig cfg;
    cfg.num_rounds = 60;
    cfg.max_depth = 5;
    cfg.subsample = 0.8;
    const auto e = train(d, cfg);
    const auto phi = tree_shap_batch(e, d.x, 2);
    const double base = expected_margin(e);
    double worst = 0;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        double s = base;
        for (std::size_t j = 0; j < d.width; ++j) s += phi[r * d.width + j];
        worst = std::max(worst, std::abs(s - e.margin(d.row(r))));
    }
    EXPECT_LT(worst, 1e-9);
}

TEST(TreeShap, UnusedFeaturesGetExactlyZero) {
    const auto e = random_ensemble(7, 6, 5, 4, /*used_features=*/3);
    std::mt19937_64 rng(1);
    for (int r = 0; r < 50; ++r) {
        const auto s = tree_shap(e, random_row(rng, 6));
        for (int j = 3; j < 6; ++j) EXPECT_EQ(s.phi[j], 0.0);
    }
}

TEST(TreeShap, InterchangeableDuplicatesShareCredit) {
    // Each tree exists twice with features 0 and 1 swapped; with x0 == x1 the two
    // features are symmetric players.
    auto e = random_ensemble(11, 3, 3, 4);
    const auto n = e.trees.size();
    for (std::size_t k = 0; k < n; ++k) {
        Tree t = e.trees[k];
        for (auto& nd : t.nodes)
            if (nd.feature == 0 || nd.feature == 1) nd.feature = 1 - nd.feature;
        e.trees.push_back(t);
    }
    std::mt19937_64 rng(2);
    for (int r = 0; r < 20; ++r) {
        auto x = random_row(rng, 3);
        x[1] = x[0];
        const auto s = tree_shap(e, x);
        const auto oracle = brute_force_shapley(e, x);
        EXPECT_NEAR(oracle[0], oracle[1], 1e-12);
        EXPECT_NEAR(s.phi[0], s.phi[1], 1e-9);
    }
}

TEST(TreeShap, MissingCoverIsAnError) {
    auto e = random_ensemble(3, 3, 1, 2);
    e.trees[0].nodes[0].cover = 0;
    try {
        (void)tree_shap(e, std::vector<double>{0, 0, 0});
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::MissingCover);
    }
}

TEST(ExplainLesion, MeansRankingAndIdentity) {
    const Dataset d = training_data(4, 400, 6);
    TrainConfig cfg;
    cfg.num_rounds = 30;
    const auto e = train(d, cfg);
    const std::span<const double> one = d.row(7);
    const auto single = explain_lesion(e, 1, one, 20);
    const auto s = tree_shap(e, one);
    for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_EQ(single.phi[j], s.phi[j]);
        EXPECT_EQ(single.abs_phi[j], std::abs(s.phi[j]));
    }
    EXPECT_EQ(single.top.size(), 6u);

    const std::span<const double> rows = std::span<const double>(d.x).first(30 * 6);
    const auto lesion = explain_lesion(e, 2, rows, 4);
    EXPECT_EQ(lesion.top.size(), 4u);
    for (std::size_t i = 1; i < lesion.top.size(); ++i)
        EXPECT_GE(lesion.abs_phi[lesion.top[i - 1]], lesion.abs_phi[lesion.top[i]]);
    double sum = lesion.base;
    for (double p : lesion.phi) sum += p;
    EXPECT_NEAR(sum, lesion.mean_margin, 1e-9);

    std::vector<double> doubled(rows.begin(), rows.end());
    doubled.insert(doubled.end(), rows.begin(), rows.end());
    EXPECT_EQ(explain_lesion(e, 2, doubled, 4).top, lesion.top);

    EXPECT_THROW((void)explain_lesion(e, 3, std::span<const double>{}, 4), Error);

    const auto mx = explain_lesion(e, 2, rows, 4, LesionAggregation::Max);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_GE(mx.abs_phi[j], lesion.abs_phi[j]);
}
