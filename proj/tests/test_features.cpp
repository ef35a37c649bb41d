#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "prorad/features.hpp"
#include "test_util.hpp"

using namespace prorad;

namespace {

PreparedCase random_case(std::uint64_t seed, Index3 dims = {20, 18, 4}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Grid g;
    g.dims = dims;
    g.spacing = {0.5, 0.5, 3.0};
    PreparedCase c;
    c.case_id = "case" + std::to_string(seed);
    c.t2w_norm = Volume3D(g);
    c.adc_norm = Volume3D(g);
    c.hbv_norm = Volume3D(g);
    c.prostate = Mask3D(g);
    c.pz = Mask3D(g);
    LabelVolume labels(g);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
        c.t2w_norm[i] = 0.5 + 0.2 * n(rng);
        c.adc_norm[i] = n(rng);
        c.hbv_norm[i] = n(rng);
    }
    const double cx = dims[0] / 2.0, cy = dims[1] / 2.0;
    for (std::int64_t z = 0; z < dims[2]; ++z)
        for (std::int64_t y = 0; y < dims[1]; ++y)
            for (std::int64_t x = 0; x < dims[0]; ++x) {
                const double dx = (x - cx) / (cx - 2), dy = (y - cy) / (cy - 2);
                if (dx * dx + dy * dy <= 1.0) {
                    c.prostate.at(x, y, z) = 1;
                    if (dy > 0.3) c.pz.at(x, y, z) = 1;
                }
            }
    labels.at(static_cast<std::int64_t>(cx), static_cast<std::int64_t>(cy), 1) = 1;
    labels.at(static_cast<std::int64_t>(cx) + 1, static_cast<std::int64_t>(cy), 1) = 2;
    c.gt_labels = labels;
    c.gt_lesions = {{1, 3, std::nullopt}, {2, 1, std::nullopt}};
    return c;
}

}  // namespace

TEST(FeatureNames, CanonicalListAndPublishedFile) {
    const auto& names = feature_names();
    ASSERT_EQ(names.size(), 137u);
    EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), 137u);
    EXPECT_EQ(names[0], "t2w_firstorder_Energy");
    EXPECT_EQ(names[kAdcOffset], "adc_firstorder_Energy");
    EXPECT_EQ(names[kAnatOffset + 4], "anat_PZL");

    std::ifstream in(std::string(PRORAD_SOURCE_DIR) + "/share/feature_names_v1.txt");
    ASSERT_TRUE(in) << "published name list missing";
    std::vector<std::string> published;
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#') published.push_back(line);
    EXPECT_EQ(published, names);
}

TEST(Anatomical, DeepestVoxelAndBboxCorner) {
    Grid g;
    g.dims = {11, 11, 11};
    Mask3D sphere(g), pz(g);
    for (std::int64_t z = 0; z < 11; ++z)
        for (std::int64_t y = 0; y < 11; ++y)
            for (std::int64_t x = 0; x < 11; ++x)
                if ((x - 5) * (x - 5) + (y - 5) * (y - 5) + (z - 5) * (z - 5) <= 16) sphere.at(x, y, z) = 1;
    const AnatomicalMaps m = anatomical_maps(sphere, pz, nullptr);
    EXPECT_DOUBLE_EQ(m.rdb.at(5, 5, 5), 1.0);
    for (double v : m.rdb.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    const BoundingBox box = mask_bbox(sphere);
    EXPECT_EQ(box.lo[0], 1);
    // (1,5,5) is on the low x face: Xpos 0, Ypos/Zpos 0.5.
    EXPECT_EQ(m.xpos.at(1, 5, 5), 0.0);
    EXPECT_EQ(m.ypos.at(1, 5, 5), 0.5);
    EXPECT_EQ(m.xpos.at(9, 5, 5), 1.0);
    for (double v : m.pzl.values()) EXPECT_EQ(v, 0.0);
}

TEST(Anatomical, CornerOfBoxAndSingleSliceExtent) {
    Grid g;
    g.dims = {6, 6, 1};
    Mask3D box(g), pz(g);
    for (std::int64_t y = 1; y < 5; ++y)
        for (std::int64_t x = 2; x < 5; ++x) box.at(x, y, 0) = 1;
    const AnatomicalMaps m = anatomical_maps(box, pz, nullptr);
    EXPECT_EQ(m.xpos.at(2, 1, 0), 0.0);
    EXPECT_EQ(m.ypos.at(2, 1, 0), 0.0);
    EXPECT_EQ(m.zpos.at(2, 1, 0), 0.0);  // one slice thick
    Mask3D empty(g);
    EXPECT_THROW((void)anatomical_maps(empty, pz, nullptr), Error);
}

TEST(Anatomical, ProvidedLikelihoodPassesThrough) {
    PreparedCase c = random_case(1);
    Volume3D like(c.prostate.grid());
    for (std::size_t i = 0; i < like.size(); ++i) like[i] = static_cast<double>(i % 7) / 7.0;
    const AnatomicalMaps m = anatomical_maps(c.prostate, c.pz, &like);
    for (std::size_t i = 0; i < like.size(); ++i) ASSERT_EQ(m.pzl[i], like[i]);
}

TEST(Anatomical, SmoothedPzStaysInUnitRange) {
    PreparedCase c = random_case(2);
    const AnatomicalMaps m = anatomical_maps(c.prostate, c.pz, nullptr);
    double peak = 0;
    for (double v : m.pzl.values()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        peak = std::max(peak, v);
    }
    EXPECT_GT(peak, 0.1);
}

TEST(GaussianSmooth, PreservesMassAwayFromBorders) {
    Grid g;
    g.dims = {41, 41, 15};
    g.spacing = {0.5, 0.5, 3.0};
    Volume3D v(g);
    v.at(20, 20, 7) = 1.0;
    const Volume3D s = gaussian_smooth(v, 3.0);
    double sum = 0;
    for (double x : s.values()) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(s.at(21, 20, 7), s.at(19, 20, 7), 1e-15);
}

TEST(ExtractCase, ShapeLabelsAndWindowConsistency) {
    const PreparedCase c = random_case(3);
    const FeatureSpec spec;
    const FeatureMatrix m = extract_case(c, spec, 2);
    EXPECT_EQ(m.rows(), count_nonzero(c.prostate));
    EXPECT_EQ(m.values.size(), m.rows() * 137);
    for (double v : m.values) ASSERT_TRUE(std::isfinite(v));

    const Grid& g = c.prostate.grid();
    const std::size_t lesion_gg3 = g.linear(10, 9, 1), lesion_gg1 = g.linear(11, 9, 1);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto v = static_cast<std::size_t>(m.voxel_index[r]);
        const int want = v == lesion_gg3 ? 1 : 0;
        ASSERT_EQ(m.label[r], want) << v;
        (void)lesion_gg1;
    }

    // A row equals the per-window engine applied to the clipped 5x5 window.
    const std::size_t r = m.rows() / 2;
    const Index3 p = g.unravel(static_cast<std::size_t>(m.voxel_index[r]));
    std::vector<double> win;
    int w = 0, h = 0;
    for (std::int64_t y = std::max<std::int64_t>(0, p[1] - 2); y <= std::min<std::int64_t>(g.dims[1] - 1, p[1] + 2); ++y, ++h) {
        w = 0;
        for (std::int64_t x = std::max<std::int64_t>(0, p[0] - 2); x <= std::min<std::int64_t>(g.dims[0] - 1, p[0] + 2); ++x, ++w)
            win.push_back(c.t2w_norm.at(x, y, p[2]) * spec.intensity_scale);
    }
    std::array<double, texture::kT2wCount> ref{};
    texture::t2w_features({win, w, h}, spec.bin_width, g.voxel_volume(), std::nullopt, ref);
    for (std::size_t k = 0; k < texture::kT2wCount; ++k) EXPECT_EQ(m.row(r)[k], ref[k]);
}

TEST(ExtractCase, BorderWindowsAreClipped) {
    PreparedCase c = random_case(4, {8, 8, 2});
    for (auto& v : c.prostate.values()) v = 1;
    const FeatureMatrix m = extract_case(c, FeatureSpec{}, 1);
    EXPECT_EQ(m.rows(), 128u);
    for (double v : m.values) ASSERT_TRUE(std::isfinite(v));
}

TEST(ExtractCase, DeterministicAcrossThreadCounts) {
    const PreparedCase c = random_case(5);
    const FeatureMatrix a = extract_case(c, FeatureSpec{}, 1);
    const FeatureMatrix b = extract_case(c, FeatureSpec{}, 3);
    const FeatureMatrix d = extract_case(c, FeatureSpec{}, 3);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(b.values, d.values);
    EXPECT_EQ(a.voxel_index, b.voxel_index);
}

TEST(ExtractCase, PerImageDiscretizationChangesOnlyBinnedFeatures) {
    const PreparedCase c = random_case(6);
    FeatureSpec per_image;
    per_image.discretization = Discretization::PerImage;
    const FeatureMatrix a = extract_case(c, FeatureSpec{}, 1);
    const FeatureMatrix b = extract_case(c, per_image, 1);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        EXPECT_EQ(a.row(r)[7], b.row(r)[7]);  // mean does not depend on binning
        EXPECT_EQ(a.row(r)[kAnatOffset], b.row(r)[kAnatOffset]);
    }
}

TEST(ExtractCase, NoNanOnConstantInput) {
    PreparedCase c = random_case(7);
    for (auto* v : {&c.t2w_norm, &c.adc_norm, &c.hbv_norm})
        for (auto& x : v->values()) x = 0.25;
    const FeatureMatrix m = extract_case(c, FeatureSpec{}, 1);
    for (double v : m.values) ASSERT_TRUE(std::isfinite(v));
}

TEST(FeatureIo, BinaryRoundTripAndCsvHeader) {
    test::TempDir dir;
    FeatureMatrix m = extract_case(random_case(8, {10, 10, 2}), FeatureSpec{}, 1);
    m.config_hash = "0123456789abcdef";
    write_feature_binary(m, dir.path() / "f.prfm");
    const FeatureMatrix r = read_feature_binary(dir.path() / "f.prfm");
    EXPECT_EQ(r.case_id, m.case_id);
    EXPECT_EQ(r.config_hash, m.config_hash);
    EXPECT_EQ(r.voxel_index, m.voxel_index);
    EXPECT_EQ(r.label, m.label);
    EXPECT_EQ(r.values, m.values);

    write_feature_csv(m, dir.path() / "f.csv");
    std::ifstream in(dir.path() / "f.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("t2w_firstorder_Energy,", 0), 0u);
    EXPECT_NE(header.find(",anat_PZL,case_id,voxel_index,label"), std::string::npos);
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    EXPECT_EQ(lines, m.rows());

    std::ofstream(dir.path() / "bad.prfm") << "XXXXjunk";
    EXPECT_THROW((void)read_feature_binary(dir.path() / "bad.prfm"), Error);
}
