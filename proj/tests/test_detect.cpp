#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "prorad/detect.hpp"
#include "prorad/error.hpp"

using namespace prorad;

namespace {

double exhaustive_youden(const std::vector<double>& s, const std::vector<int>& y, double& best_t) {
    double best = -2;
    std::set<double> cands(s.begin(), s.end());
    for (double t : cands) {
        double tp = 0, fp = 0, p = 0, n = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            (y[i] ? p : n) += 1;
            if (s[i] >= t) (y[i] ? tp : fp) += 1;
        }
        const double j = tp / p - fp / n;
        if (j > best + 1e-12 || (std::abs(j - best) <= 1e-12 && t < best_t)) {
            best = j;
            best_t = t;
        }
    }
    return best;
}

Grid grid(Index3 dims, Vec3 spacing = {1, 1, 1}) {
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    return g;
}

void fill_box(Volume3D& v, Index3 lo, Index3 hi, double value) {
    for (auto z = lo[2]; z <= hi[2]; ++z)
        for (auto y = lo[1]; y <= hi[1]; ++y)
            for (auto x = lo[0]; x <= hi[0]; ++x) v.at(x, y, z) = value;
}

}  // namespace

TEST(Youden, SpecExample) {
    const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
    const std::vector<int> y{1, 1, 0, 0};
    EXPECT_EQ(youden_threshold(s, y), 0.8);
}

TEST(Youden, InvertedScoresStillReturnArgmax) {
    const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    const std::vector<int> y{1, 1, 0, 0};
    double t = 0;
    (void)exhaustive_youden(s, y, t);
    EXPECT_EQ(youden_threshold(s, y), t);
    EXPECT_EQ(t, 0.1);  // J = 0 there, which beats every negative J
}

TEST(Youden, MatchesExhaustiveScanAndIgnoresDuplication) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 50);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng() % 2);
            s[i] = static_cast<double>(rng() % 15 + 4 * y[i]) / 20.0;
        }
        y[0] = 0;
        y[1] = 1;
        double t = 0;
        (void)exhaustive_youden(s, y, t);
        EXPECT_EQ(youden_threshold(s, y), t);
        std::vector<double> s2 = s;
        std::vector<int> y2 = y;
        s2.insert(s2.end(), s.begin(), s.end());
        y2.insert(y2.end(), y.begin(), y.end());
        EXPECT_EQ(youden_threshold(s2, y2), t);
    }
    EXPECT_THROW((void)youden_threshold(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
}

TEST(Components, ConnectivityRules) {
    Mask3D m(grid({10, 10, 10}), 0);
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) {
                m.at(x, y, z) = 1;
                m.at(x + 4, y, z) = 1;  // 2-voxel gap
            }
    auto c = connected_components_3d(m);
    EXPECT_EQ(c.sizes, (std::vector<std::int64_t>{8, 8}));

    Mask3D corner(grid({4, 4, 4}), 0);
    corner.at(0, 0, 0) = 1;
    corner.at(1, 1, 1) = 1;
    EXPECT_EQ(connected_components_3d(corner, 26).sizes.size(), 1u);
    EXPECT_EQ(connected_components_3d(corner, 6).sizes.size(), 2u);
    EXPECT_EQ(connected_components_3d(corner, 18).sizes.size(), 2u);

    EXPECT_TRUE(connected_components_3d(Mask3D(grid({3, 3, 3}), 0)).sizes.empty());
    EXPECT_THROW((void)connected_components_3d(corner, 8), Error);
}

TEST(PeakScore, UniformAndSingleVoxel) {
    Volume3D uni(grid({20, 20, 5}, {0.5, 0.5, 3.0}), 0.7);
    Mask3D les(uni.grid(), 0);
    les.at(3, 3, 0) = 1;
    les.at(4, 3, 0) = 1;
    EXPECT_NEAR(peak_score(uni, les).score, 0.7, 1e-12);

    const Vec3 sp{0.5, 0.5, 3.0};
    Volume3D one(grid({41, 41, 9}, sp), 0.0);
    one.at(20, 20, 4) = 1.0;
    Mask3D center(one.grid(), 0);
    center.at(20, 20, 4) = 1;
    // Sphere voxel count for this spacing: dz in {-1, 0, 1}; in-plane radius^2 =
    // 25 - 9 dz^2 mm^2, i.e. (2i)^2 + (2j)^2 <= 100 or <= 64 in half-millimetre steps.
    std::size_t expected = 0;
    for (int dz = -1; dz <= 1; ++dz)
        for (int j = -10; j <= 10; ++j)
            for (int i = -10; i <= 10; ++i)
                if (i * i + j * j <= (100 - 36 * dz * dz)) ++expected;
    EXPECT_EQ(sphere_voxel_count(sp), expected);
    const auto ps = peak_score(one, center);
    EXPECT_NEAR(ps.score, 1.0 / static_cast<double>(expected), 1e-15);
    EXPECT_EQ(ps.peak_index, one.grid().linear(20, 20, 4));

    EXPECT_THROW((void)peak_score(one, Mask3D(one.grid(), 0)), Error);
}

TEST(PeakScore, LargeInteriorLesionAndBound) {
    Volume3D v(grid({60, 60, 12}, {0.5, 0.5, 3.0}), 0.0);
    fill_box(v, {0, 0, 0}, {59, 59, 11}, 0.64);
    Mask3D les(v.grid(), 0);
    for (int z = 4; z < 8; ++z)
        for (int y = 20; y < 40; ++y)
            for (int x = 20; x < 40; ++x) les.at(x, y, z) = 1;
    EXPECT_NEAR(peak_score(v, les).score, 0.64, 1e-12);

    std::mt19937_64 rng(3);
    for (auto& x : v.values()) x = static_cast<double>(rng() % 1000) / 1000.0;
    const auto p = peak_score(v, les);
    EXPECT_LE(p.score, *std::max_element(v.values().begin(), v.values().end()));
    EXPECT_GE(p.score, 0.0);
}

TEST(DetectionMap, TopThreeBySize) {
    Volume3D tp(grid({80, 20, 2}), 0.0);
    const int sizes[5] = {100, 90, 80, 10, 5};
    int x0 = 0;
    for (int k = 0; k < 5; ++k) {
        for (int i = 0; i < sizes[k]; ++i) tp.at(x0 + i % 10, i / 10 % 10, i / 100) = 0.9 - 0.01 * k;
        x0 += 12;
    }
    OperatingThresholds th{0.5, 0.76};
    const auto dm = build_detection_map(tp, th);
    ASSERT_EQ(dm.lesions.size(), 3u);
    EXPECT_EQ(dm.lesions[0].voxel_count, 100);
    EXPECT_EQ(dm.lesions[1].voxel_count, 90);
    EXPECT_EQ(dm.lesions[2].voxel_count, 80);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(dm.lesions[k].id, static_cast<int>(k) + 1);
    for (std::size_t i = 0; i < tp.size(); ++i)
        if (dm.labels[i]) EXPECT_GE(tp[i], th.voxel_youden_t);
}

TEST(DetectionMap, EmptyAndSingleBlob) {
    Volume3D tp(grid({30, 30, 4}), 0.2);
    EXPECT_TRUE(build_detection_map(tp, OperatingThresholds{0.5, 0.76}).lesions.empty());
    EXPECT_EQ(patient_score(build_detection_map(tp, OperatingThresholds{0.5, 0.76})), 0.0);

    std::mt19937_64 rng(8);
    for (int x = 5; x < 15; ++x)
        for (int y = 5; y < 12; ++y)
            for (int z = 0; z < 3; ++z) tp.at(x, y, z) = 0.5 + static_cast<double>(rng() % 500) / 1000.0;
    const OperatingThresholds th{0.5, 0.76};
    const auto dm = build_detection_map(tp, th);
    ASSERT_EQ(dm.lesions.size(), 1u);
    for (std::size_t i = 0; i < tp.size(); ++i) EXPECT_EQ(dm.labels[i] == 1, tp[i] >= 0.5);
    EXPECT_EQ(patient_score(dm), dm.lesions[0].score);

    // Re-running on the emitted support reproduces the components.
    Volume3D support(tp.grid(), 0.0);
    for (std::size_t i = 0; i < tp.size(); ++i) support[i] = dm.labels[i] ? 1.0 : 0.0;
    const auto again = build_detection_map(support, th);
    EXPECT_EQ(again.labels.values().size(), dm.labels.values().size());
    for (std::size_t i = 0; i < tp.size(); ++i) EXPECT_EQ(again.labels[i], dm.labels[i]);
}

TEST(DetectionMap, RaisingThresholdNeverGrowsComponents) {
    std::mt19937_64 rng(12);
    Volume3D tp(grid({24, 24, 4}), 0.0);
    for (auto& v : tp.values()) v = static_cast<double>(rng() % 1000) / 1000.0;
    std::int64_t prev_total = INT64_MAX;
    for (double t : {0.3, 0.5, 0.7, 0.9}) {
        Mask3D bin(tp.grid(), 0);
        std::int64_t total = 0;
        for (std::size_t i = 0; i < tp.size(); ++i) total += bin[i] = tp[i] >= t;
        EXPECT_LE(total, prev_total);
        prev_total = total;
        const auto dm = build_detection_map(tp, OperatingThresholds{t, 0.76});
        EXPECT_LE(dm.lesions.size(), 3u);
        for (std::size_t i = 0; i < tp.size(); ++i)
            if (dm.labels[i]) EXPECT_GE(tp[i], t);
    }
}

TEST(PatientScore, MaxOfLesions) {
    DetectionMap dm;
    dm.lesions = {{1, 10, 0.4, 0}, {2, 5, 0.81, 0}};
    EXPECT_EQ(patient_score(dm), 0.81);
    dm.lesions.resize(1);
    EXPECT_EQ(patient_score(dm), 0.4);
}

TEST(Thresholds, Validation) {
    EXPECT_NO_THROW((OperatingThresholds{0.3, 0.76}.validate()));
    EXPECT_EQ(OperatingThresholds{}.lesion_decision_t, 0.76);
    EXPECT_THROW((OperatingThresholds{0.0, 0.76}.validate()), Error);
    EXPECT_THROW((OperatingThresholds{0.3, 1.0}.validate()), Error);
}
