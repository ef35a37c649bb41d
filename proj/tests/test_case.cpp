#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"
#include "prorad/case.hpp"
#include "prorad/nifti.hpp"
#include "test_util.hpp"

using namespace prorad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Grid t2w_grid() {
    Grid g;
    g.dims = {16, 16, 3};
    g.spacing = {0.5, 0.5, 3.0};
    g.origin = {0.0, 0.0, 0.0};
    return g;
}

// Writes a small on-grid case and returns its manifest entry as JSON.
json write_case(const fs::path& dir, const std::string& id) {
    const Grid g = t2w_grid();
    Volume3D t2w(g, 400.0);
    write_nifti(t2w, dir / (id + "_t2w.nii.gz"));
    for (double b : {50.0, 400.0, 800.0}) {
        Volume3D d(g, 1000.0 * std::exp(-b * 1e-3));
        write_nifti(d, dir / (id + "_b" + std::to_string(static_cast<int>(b)) + ".nii.gz"));
    }
    Mask3D prostate(g), pz(g), tz(g);
    for (std::int64_t z = 0; z < 3; ++z)
        for (std::int64_t y = 4; y < 12; ++y)
            for (std::int64_t x = 4; x < 12; ++x) {
                prostate.at(x, y, z) = 1;
                (y < 7 ? pz : tz).at(x, y, z) = 1;
            }
    write_nifti(prostate, dir / (id + "_prostate.nii.gz"));
    write_nifti(pz, dir / (id + "_pz.nii.gz"));
    write_nifti(tz, dir / (id + "_tz.nii.gz"));
    LabelVolume labels(g);
    labels.at(6, 6, 1) = 1;
    labels.at(9, 9, 1) = 2;
    write_nifti(labels, dir / (id + "_gt.nii.gz"));
    return json{{"case_id", id},
                {"t2w", id + "_t2w.nii.gz"},
                {"dwi", json::array({{{"b", 50}, {"path", id + "_b50.nii.gz"}},
                                     {{"b", 400}, {"path", id + "_b400.nii.gz"}},
                                     {{"b", 800}, {"path", id + "_b800.nii.gz"}}})},
                {"masks", {{"prostate", id + "_prostate.nii.gz"}, {"pz", id + "_pz.nii.gz"}, {"tz", id + "_tz.nii.gz"}}},
                {"gt", {{"labels", id + "_gt.nii.gz"}, {"lesions", json::array({{{"label", 1}, {"gg", 3}}, {{"label", 2}, {"gg", 1}}})}}},
                {"split", "train"},
                {"t2w_ref", {{"low", 100.0}, {"high", 900.0}}}};
}

DatasetManifest manifest_of(const fs::path& dir, const json& cases) {
    const json doc{{"version", 1}, {"cases", cases}};
    return parse_manifest_text(doc.dump(), dir);
}

ErrorCode load_error(const CaseEntry& e) {
    try {
        (void)load_case(e);
    } catch (const Error& err) {
        return err.code();
    }
    return ErrorCode::Config;
}

}  // namespace

TEST(Manifest, ResolvesRelativePaths) {
    test::TempDir dir;
    const DatasetManifest m = manifest_of(dir.path(), json::array({write_case(dir.path(), "c1")}));
    ASSERT_EQ(m.cases.size(), 1u);
    EXPECT_EQ(m.cases[0].t2w, dir.path() / "c1_t2w.nii.gz");
    EXPECT_EQ(m.cases[0].dwi.size(), 3u);
    EXPECT_EQ(m.cases[0].lesions[0].grade_group, 3);
    EXPECT_EQ(m.cases[0].split, "train");
}

TEST(Manifest, SchemaErrors) {
    test::TempDir dir;
    json c = write_case(dir.path(), "c1");
    auto code = [&](const json& cases) {
        try {
            (void)manifest_of(dir.path(), cases);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Config;
    };
    EXPECT_EQ(code(json::array({c, c})), ErrorCode::Schema);  // duplicate id
    json no_split = c;
    no_split.erase("split");
    EXPECT_EQ(code(json::array({no_split})), ErrorCode::Schema);
    json bad_gg = c;
    bad_gg["gt"]["lesions"][0]["gg"] = 7;
    EXPECT_EQ(code(json::array({bad_gg})), ErrorCode::Schema);
    json shared = c;
    shared["masks"]["pz"] = shared["masks"]["tz"];
    EXPECT_EQ(code(json::array({shared})), ErrorCode::Schema);
    EXPECT_THROW((void)parse_manifest_text("{not json", dir.path()), Error);
}

TEST(LoadCase, SameGridLoadsWithoutResampling) {
    test::TempDir dir;
    const DatasetManifest m = manifest_of(dir.path(), json::array({write_case(dir.path(), "c1")}));
    const CaseRecord c = load_case(m.cases[0]);
    EXPECT_TRUE(c.t2w.grid().same_frame(t2w_grid()));
    EXPECT_TRUE(c.prostate.grid().same_frame(t2w_grid()));
    EXPECT_EQ(c.dwi.size(), 3u);
    EXPECT_EQ(c.dwi[1].signal[0], static_cast<double>(static_cast<float>(1000.0 * std::exp(-0.4))));
    EXPECT_EQ(count_nonzero(c.prostate), 8u * 8u * 3u);
    EXPECT_TRUE(c.has_cspca());
    EXPECT_EQ(*c.ref_low, 100.0);
}

TEST(LoadCase, LabelMismatch) {
    test::TempDir dir;
    json c = write_case(dir.path(), "c1");
    c["gt"]["lesions"] = json::array({{{"label", 1}, {"gg", 3}}});  // label 2 undeclared
    EXPECT_EQ(load_error(manifest_of(dir.path(), json::array({c})).cases[0]), ErrorCode::LabelMismatch);
    c["gt"]["lesions"] = json::array({{{"label", 1}, {"gg", 3}}, {{"label", 2}, {"gg", 1}}, {{"label", 3}, {"gg", 2}}});
    EXPECT_EQ(load_error(manifest_of(dir.path(), json::array({c})).cases[0]), ErrorCode::LabelMismatch);
}

TEST(LoadCase, MissingMask) {
    test::TempDir dir;
    json c = write_case(dir.path(), "c1");
    fs::remove(dir.path() / "c1_pz.nii.gz");
    EXPECT_EQ(load_error(manifest_of(dir.path(), json::array({c})).cases[0]), ErrorCode::MissingMask);
}

TEST(LoadCase, CoarseDwiIsResampledOntoT2wGrid) {
    test::TempDir dir;
    json c = write_case(dir.path(), "c1");
    // 2 mm DWI covering the same field of view: voxel centers at 0.75 + 2 i.
    Grid dg;
    dg.dims = {4, 4, 3};
    dg.spacing = {2.0, 2.0, 3.0};
    dg.origin = {0.75, 0.75, 0.0};
    Volume3D d(dg);
    for (std::int64_t z = 0; z < 3; ++z)
        for (std::int64_t y = 0; y < 4; ++y)
            for (std::int64_t x = 0; x < 4; ++x) d.at(x, y, z) = 100.0 + 10.0 * static_cast<double>(x);
    write_nifti(d, dir.path() / "c1_b50.nii.gz");
    const CaseRecord r = load_case(manifest_of(dir.path(), json::array({c})).cases[0]);
    ASSERT_TRUE(r.dwi[0].signal.grid().same_frame(t2w_grid()));
    // T2W voxel x = 5 sits at 2.5 mm, i.e. DWI index 0.875: 100 + 8.75.
    EXPECT_NEAR(r.dwi[0].signal.at(5, 3, 1), 108.75, 1e-9);
}

TEST(LoadCase, DisjointFramesRejected) {
    test::TempDir dir;
    json c = write_case(dir.path(), "c1");
    Grid far = t2w_grid();
    far.origin = {500.0, 0.0, 0.0};
    write_nifti(Mask3D(far, 1), dir.path() / "c1_tz.nii.gz");
    EXPECT_EQ(load_error(manifest_of(dir.path(), json::array({c})).cases[0]), ErrorCode::FrameMismatch);
}
