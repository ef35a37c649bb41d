#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "prorad/volume.hpp"

using namespace prorad;

namespace {

Grid make_grid(Index3 dims, Vec3 spacing = {1, 1, 1}, Vec3 origin = {0, 0, 0}) {
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    g.origin = origin;
    return g;
}

Mask3D random_mask(std::mt19937_64& rng, Index3 dims, double p) {
    Mask3D m(make_grid(dims));
    std::bernoulli_distribution on(p);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = on(rng) ? 1 : 0;
    return m;
}

// Nearest background voxel center by exhaustive search; the ring just outside the image
// counts as background.
Volume3D brute_force_distance(const Mask3D& mask) {
    const Grid& g = mask.grid();
    Volume3D out(g, 0.0);
    for (std::int64_t z = 0; z < g.dims[2]; ++z)
        for (std::int64_t y = 0; y < g.dims[1]; ++y)
            for (std::int64_t x = 0; x < g.dims[0]; ++x) {
                if (!mask.at(x, y, z)) continue;
                double best = std::numeric_limits<double>::infinity();
                for (std::int64_t bz = -1; bz <= g.dims[2]; ++bz)
                    for (std::int64_t by = -1; by <= g.dims[1]; ++by)
                        for (std::int64_t bx = -1; bx <= g.dims[0]; ++bx) {
                            if (g.contains(bx, by, bz) && mask.at(bx, by, bz)) continue;
                            const double dx = (bx - x) * g.spacing[0];
                            const double dy = (by - y) * g.spacing[1];
                            const double dz = (bz - z) * g.spacing[2];
                            best = std::min(best, dx * dx + dy * dy + dz * dz);
                        }
                out.at(x, y, z) = std::sqrt(best);
            }
    return out;
}

}  // namespace

TEST(Grid, RejectsInvalidGeometry) {
    EXPECT_THROW(Volume3D(make_grid({0, 1, 1})), Error);
    EXPECT_THROW(Volume3D(make_grid({1, 1, 1}, {1, -1, 1})), Error);
    EXPECT_THROW(Volume3D(make_grid({2, 2, 2}), std::vector<double>(7)), Error);
}

TEST(ResampleInplane, ConstantFieldDoublesDims) {
    Volume3D v(make_grid({6, 5, 3}, {1.0, 1.0, 3.0}), 7.0);
    const Volume3D r = resample_inplane(v, 0.5, 0.5, Interpolation::Linear);
    EXPECT_EQ(r.dims()[0], 12);
    EXPECT_EQ(r.dims()[1], 10);
    EXPECT_EQ(r.dims()[2], 3);
    EXPECT_DOUBLE_EQ(r.spacing()[0], 0.5);
    EXPECT_DOUBLE_EQ(r.spacing()[2], 3.0);
    for (double x : r.values()) EXPECT_EQ(x, 7.0);
}

TEST(ResampleInplane, LinearMidpoint) {
    Volume3D v(make_grid({2, 1, 1}), std::vector<double>{0.0, 10.0});
    const Volume3D r = resample_inplane(v, 0.5, 1.0, Interpolation::Linear);
    ASSERT_EQ(r.dims()[0], 4);
    EXPECT_DOUBLE_EQ(r[0], 0.0);
    EXPECT_DOUBLE_EQ(r[1], 5.0);
    EXPECT_DOUBLE_EQ(r[2], 10.0);
    EXPECT_DOUBLE_EQ(r[3], 10.0);  // clamp-to-edge
}

TEST(ResampleInplane, IdentityIsBitwise) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0, 100);
    Volume3D v(make_grid({9, 7, 4}, {0.7, 0.45, 3.0}, {-3.0, 2.0, 1.0}));
    for (auto& x : v.values()) x = n(rng);
    const Volume3D r = resample_inplane(v, 0.7, 0.45, Interpolation::Linear);
    ASSERT_TRUE(r.grid().same_frame(v.grid(), 0.0));
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(r[i], v[i]);
}

TEST(ResampleInplane, LinearBoundedBySourceRange) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-50, 50);
    Volume3D v(make_grid({8, 8, 3}, {0.9, 1.3, 3.0}));
    for (auto& x : v.values()) x = u(rng);
    const auto [lo, hi] = std::minmax_element(v.values().begin(), v.values().end());
    const Volume3D r = resample_inplane(v, 0.37, 0.5, Interpolation::Linear);
    for (double x : r.values()) {
        EXPECT_GE(x, *lo);
        EXPECT_LE(x, *hi);
    }
}

TEST(ResampleInplane, NearestKeepsMasksBinary) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Mask3D m = random_mask(rng, {16, 16, 16}, 0.4);
        const Mask3D r = resample_inplane(m, 0.37 + 0.1 * trial, 0.5);
        for (auto x : r.values()) EXPECT_TRUE(x == 0 || x == 1);
    }
}

TEST(ResampleInplane, NonPositiveTargetIsInvalid) {
    Volume3D v(make_grid({2, 2, 2}));
    try {
        (void)resample_inplane(v, 0.0, 0.5, Interpolation::Linear);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
}

TEST(ResampleToGrid, IdentityAndConstant) {
    Volume3D v(make_grid({5, 4, 3}, {1, 1, 2}), 3.25);
    v[7] = 1.5;
    const Volume3D same = resample_to_grid(v, v.grid(), Interpolation::Linear);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(same[i], v[i]);

    Volume3D c(make_grid({5, 4, 3}, {1, 1, 2}), 2.5);
    const Volume3D r = resample_to_grid(c, make_grid({11, 3, 7}, {0.3, 1.7, 0.9}, {-1, 0.5, 0.2}),
                                        Interpolation::Linear);
    for (double x : r.values()) EXPECT_EQ(x, 2.5);
}

TEST(ResampleToGrid, LinearRampOnShiftedGrid) {
    Volume3D v(make_grid({20, 6, 5}, {2.0, 2.0, 3.0}, {10.0, -4.0, 0.0}));
    for (std::int64_t z = 0; z < 5; ++z)
        for (std::int64_t y = 0; y < 6; ++y)
            for (std::int64_t x = 0; x < 20; ++x) v.at(x, y, z) = 10.0 + 2.0 * x;  // f = world x
    const Grid ref = make_grid({60, 9, 8}, {0.5, 0.9, 1.4}, {11.3, -3.1, 0.4});
    const Volume3D r = resample_to_grid(v, ref, Interpolation::Linear);
    for (std::int64_t x = 0; x < ref.dims[0]; ++x) {
        const double world = ref.origin[0] + ref.spacing[0] * x;
        EXPECT_NEAR(r.at(x, 4, 3), world, 1e-6);
    }
}

TEST(DistanceToBoundary, SingleVoxel) {
    Mask3D m(make_grid({5, 5, 5}));
    m.at(2, 2, 2) = 1;
    const Volume3D d = distance_to_boundary(m);
    EXPECT_DOUBLE_EQ(d.at(2, 2, 2), 1.0);
    EXPECT_DOUBLE_EQ(d.at(0, 0, 0), 0.0);
}

TEST(DistanceToBoundary, CubeCenter) {
    Mask3D m(make_grid({11, 11, 11}), 1);
    const Volume3D d = distance_to_boundary(m);
    EXPECT_DOUBLE_EQ(d.at(5, 5, 5), 6.0);
    const Volume3D oracle = brute_force_distance(m);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_DOUBLE_EQ(d[i], oracle[i]);
}

TEST(DistanceToBoundary, AnisotropicSpacing) {
    Mask3D m(make_grid({5, 5, 5}, {1, 1, 3}));
    m.at(2, 2, 2) = 1;
    m.at(3, 2, 2) = 1;
    m.at(2, 2, 3) = 1;
    const Volume3D d = distance_to_boundary(m);
    EXPECT_DOUBLE_EQ(d.at(3, 2, 2), 1.0);  // in-slice neighbour
    EXPECT_DOUBLE_EQ(d.at(2, 2, 2), 1.0);

    Mask3D column(make_grid({1, 1, 3}, {1, 1, 3}), 1);
    Mask3D plane(make_grid({9, 9, 3}, {1, 1, 3}), 1);
    const Volume3D dp = distance_to_boundary(plane);
    EXPECT_DOUBLE_EQ(dp.at(4, 4, 1), 5.0);  // 5 mm in-plane beats 6 mm across slices
    Mask3D slab(make_grid({21, 21, 3}, {1, 1, 3}), 1);
    EXPECT_DOUBLE_EQ(distance_to_boundary(slab).at(10, 10, 1), 6.0);
    EXPECT_DOUBLE_EQ(distance_to_boundary(column).at(0, 0, 1), 1.0);
}

TEST(DistanceToBoundary, MatchesBruteForceOnRandomMasks) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dim(1, 12);
    std::uniform_real_distribution<double> sp(0.3, 3.5);
    for (int trial = 0; trial < 40; ++trial) {
        Grid g = make_grid({dim(rng), dim(rng), dim(rng)}, {sp(rng), sp(rng), sp(rng)});
        Mask3D m(g);
        std::bernoulli_distribution on(0.3 + 0.6 * (trial % 3) / 2.0);
        for (auto& v : m.values()) v = on(rng) ? 1 : 0;
        if (count_nonzero(m) == 0) m[0] = 1;
        const Volume3D d = distance_to_boundary(m);
        const Volume3D oracle = brute_force_distance(m);
        for (std::size_t i = 0; i < d.size(); ++i) ASSERT_NEAR(d[i], oracle[i], 1e-12) << "trial " << trial;
    }
}

TEST(DistanceToBoundary, NonNegativeAndLipschitz) {
    std::mt19937_64 rng(12);
    Grid g = make_grid({16, 16, 16}, {0.5, 0.8, 3.0});
    Mask3D m(g);
    std::bernoulli_distribution on(0.8);
    for (auto& v : m.values()) v = on(rng) ? 1 : 0;
    const Volume3D d = distance_to_boundary(m);
    for (std::int64_t z = 0; z < 16; ++z)
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x) {
                const double here = d.at(x, y, z);
                EXPECT_GE(here, 0.0);
                if (!m.at(x, y, z)) EXPECT_EQ(here, 0.0);
                if (x + 1 < 16) EXPECT_LE(std::abs(here - d.at(x + 1, y, z)), g.spacing[0] + 1e-12);
                if (y + 1 < 16) EXPECT_LE(std::abs(here - d.at(x, y + 1, z)), g.spacing[1] + 1e-12);
                if (z + 1 < 16) EXPECT_LE(std::abs(here - d.at(x, y, z + 1)), g.spacing[2] + 1e-12);
            }
}

TEST(DistanceToBoundary, EmptyMaskThrows) {
    Mask3D m(make_grid({3, 3, 3}));
    try {
        (void)distance_to_boundary(m);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
    }
}

TEST(MaskBbox, SingleAndFull) {
    Mask3D m(make_grid({8, 8, 8}));
    m.at(3, 4, 5) = 1;
    const auto box = mask_bbox(m);
    EXPECT_EQ(box.lo, (Index3{3, 4, 5}));
    EXPECT_EQ(box.hi, (Index3{3, 4, 5}));
    Mask3D full(make_grid({4, 6, 2}), 1);
    const auto fb = mask_bbox(full);
    EXPECT_EQ(fb.lo, (Index3{0, 0, 0}));
    EXPECT_EQ(fb.hi, (Index3{3, 5, 1}));
    EXPECT_THROW((void)mask_bbox(Mask3D(make_grid({2, 2, 2}))), Error);
}

TEST(MaskBbox, TightOnRandomMasks) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        Mask3D m = random_mask(rng, {10, 9, 7}, 0.02);
        if (count_nonzero(m) == 0) continue;
        const auto box = mask_bbox(m);
        const Grid& g = m.grid();
        // Every set voxel is inside; each face has at least one set voxel on it.
        std::array<bool, 3> lo_hit{}, hi_hit{};
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!m[i]) continue;
            const Index3 p = g.unravel(i);
            for (int a = 0; a < 3; ++a) {
                ASSERT_GE(p[a], box.lo[a]);
                ASSERT_LE(p[a], box.hi[a]);
                lo_hit[a] = lo_hit[a] || p[a] == box.lo[a];
                hi_hit[a] = hi_hit[a] || p[a] == box.hi[a];
            }
        }
        for (int a = 0; a < 3; ++a) {
            EXPECT_TRUE(lo_hit[a]);
            EXPECT_TRUE(hi_hit[a]);
        }
    }
}
