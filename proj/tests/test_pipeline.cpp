#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "prorad/hash.hpp"
#include "prorad/phantom.hpp"
#include "prorad/pipeline.hpp"
#include "test_util.hpp"

namespace prorad {
namespace {

namespace fs = std::filesystem;

// One small cohort shared by the suite; individual tests write into their own outputs.
class PipelineTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test::TempDir();
        PhantomSpec spec;
        spec.cases = 8;
        spec.dims = {64, 64, 6};
        manifest_ = write_phantom_cohort(spec, dir_->path() / "cohort");
        Json cfg;
        cfg["format"] = "prorad-config";
        cfg["version"] = 1;
        cfg["seed"] = 3;
        cfg["cv_folds"] = 2;
        cfg["train"] = {{"num_rounds", 25}, {"max_depth", 3}, {"early_stopping_rounds", 0}};
        config_path_ = dir_->path() / "config.json";
        write_json(cfg, config_path_);
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }

    static RunContext context(const fs::path& out) {
        RunContext ctx;
        ctx.manifest_path = manifest_;
        ctx.manifest = parse_manifest(manifest_);
        ctx.config = load_config(config_path_);
        ctx.config_hash = config_hash(ctx.config);
        ctx.out.root = out;
        ctx.threads = 2;
        return ctx;
    }

    static int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
        args.insert(args.begin(), "prorad");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        if (err_text) *err_text = err.str();
        return code;
    }

    static std::map<std::string, std::string> tree_hashes(const fs::path& root) {
        std::map<std::string, std::string> h;
        for (const auto& e : fs::recursive_directory_iterator(root))
            if (e.is_regular_file()) h[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
        return h;
    }

    static test::TempDir* dir_;
    static fs::path manifest_;
    static fs::path config_path_;
};

test::TempDir* PipelineTest::dir_ = nullptr;
fs::path PipelineTest::manifest_;
fs::path PipelineTest::config_path_;

TEST_F(PipelineTest, PreprocessWritesPerCaseVolumesDeterministically) {
    test::TempDir a, b;
    RunContext ca = context(a.path()), cb = context(b.path());
    cb.threads = 1;
    const StageResult r = run_preprocess(ca);
    EXPECT_TRUE(r.failed_cases.empty());
    (void)run_preprocess(cb);
    for (const auto& c : ca.manifest.cases)
        for (const char* f : {"t2w_norm.nii.gz", "adc.nii.gz", "hbv.nii.gz"})
            EXPECT_TRUE(fs::exists(a.path() / "preprocess" / c.case_id / f)) << c.case_id << " " << f;
    EXPECT_EQ(tree_hashes(a.path()), tree_hashes(b.path()));
    const PreparedCase back = load_prepared_case(ca.out, ca.manifest.cases[0].case_id);
    EXPECT_GT(count_nonzero(back.prostate), 0u);
    EXPECT_EQ(back.adc.grid().dims, back.prostate.grid().dims);
}

TEST_F(PipelineTest, MissingMaskFailsOneCaseAndExitsTwo) {
    test::TempDir t;
    fs::copy(manifest_.parent_path(), t.path() / "cohort", fs::copy_options::recursive);
    const fs::path m = t.path() / "cohort" / "manifest.json";
    fs::remove(t.path() / "cohort" / "ph001" / "pz.nii.gz");
    std::string err;
    EXPECT_EQ(cli({"preprocess", "--manifest", m.string(), "--config", config_path_.string(), "--out", (t.path() / "out").string()}, &err),
              kExitPartial);
    EXPECT_NE(err.find("ph001"), std::string::npos);
    EXPECT_FALSE(fs::exists(t.path() / "out" / "preprocess" / "ph001"));
    EXPECT_TRUE(fs::exists(t.path() / "out" / "preprocess" / "ph000" / "adc.nii.gz"));
}

TEST_F(PipelineTest, RunAllCachesAndReRunsAfterCorruption) {
    test::TempDir t;
    const RunContext ctx = context(t.path());
    const auto first = run_all(ctx);
    ASSERT_EQ(first.size(), 7u);
    for (const auto& r : first) EXPECT_FALSE(r.cached) << r.stage;
    const auto snapshot = tree_hashes(t.path());

    const auto second = run_all(ctx);
    for (const auto& r : second) EXPECT_TRUE(r.cached) << r.stage;
    EXPECT_EQ(tree_hashes(t.path()), snapshot);

    // Damage one probability map: predict and everything after it must rerun.
    const fs::path tp = t.path() / "tpmaps" / "ph000.nii.gz";
    std::ofstream(tp, std::ios::binary | std::ios::app) << "garbage";
    const auto third = run_all(ctx);
    const std::vector<bool> expect{true, true, true, false, false, false, false};
    for (std::size_t i = 0; i < third.size(); ++i) EXPECT_EQ(third[i].cached, expect[i]) << third[i].stage;
    EXPECT_EQ(tree_hashes(t.path()), snapshot);

    // A different config invalidates everything.
    RunContext other = ctx;
    other.config.lesion_decision_t = 0.5;
    other.config_hash = config_hash(other.config);
    for (const auto& r : run_all(other)) EXPECT_FALSE(r.cached) << r.stage;
}

TEST_F(PipelineTest, OutputsAreTaggedAndSeparableCohortIsSolved) {
    test::TempDir t;
    const RunContext ctx = context(t.path());
    (void)run_all(ctx);
    for (const auto& e : fs::recursive_directory_iterator(t.path())) {
        if (!e.is_regular_file() || e.path().parent_path().filename() == ".cache") continue;
        const std::string ext = e.path().extension().string();
        std::ifstream in(e.path(), std::ios::binary);
        const std::string text((std::istreambuf_iterator<char>(in)), {});
        if (ext == ".json" || ext == ".csv" || ext == ".svg")
            EXPECT_NE(text.find(ctx.config_hash), std::string::npos) << e.path();
    }
    const Json m = read_json(t.path() / "evaluation" / "metrics.json");
    EXPECT_EQ(m["patient"]["auroc"].get<double>(), 1.0);
    EXPECT_EQ(m["lesion"]["froc"][1]["fp_per_case"].get<double>(), 0.0);
    EXPECT_EQ(m["lesion"]["froc"].back()["sensitivity"].get<double>(), 1.0);
    EXPECT_TRUE(m["pirads"]["delong"].contains("p_value"));
    const Json p = read_json(t.path() / "provenance.json");
    EXPECT_EQ(p["seeds"]["master"].get<std::uint64_t>(), 3u);
    EXPECT_EQ(p["seeds"]["train"].get<std::uint64_t>(), ctx.config.train.seed);
    EXPECT_EQ(p["inputs"].size(), ctx.manifest.cases.size());
    EXPECT_EQ(p["manifest"]["sha256"].get<std::string>(), sha256_file(manifest_));
    EXPECT_FALSE(fs::is_empty(t.path() / "explanations"));
}

TEST_F(PipelineTest, EvaluateRefusesMixedHashes) {
    test::TempDir t;
    const RunContext ctx = context(t.path());
    (void)run_all(ctx);
    const fs::path side = t.path() / "detections" / "ph005.json";
    Json j = read_json(side);
    j["config_hash"] = "ffffffffffffffff";
    write_json(j, side);
    try {
        (void)run_evaluate(ctx);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Schema);
    }
    EXPECT_EQ(cli({"evaluate", "--config", config_path_.string(), "--out", t.path().string(), "-q"}), kExitConfig);
    // Predicting with a model trained under another config is refused too.
    EXPECT_EQ(cli({"predict", "--seed", "99", "--config", config_path_.string(), "--out", t.path().string(), "-q"}), kExitConfig);
}

TEST_F(PipelineTest, StageFailureNamesTheStage) {
    test::TempDir t;
    const RunContext ctx = context(t.path());
    (void)run_all(ctx);
    RunContext broken = ctx;
    broken.config.cv_folds = 10;  // more folds than train patients per class
    try {
        (void)run_all(broken);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "train");
    }
}

TEST_F(PipelineTest, CliConfigErrorsExitThree) {
    test::TempDir t;
    const fs::path bad = t.path() / "bad.json";
    write_json(Json{{"train", {{"depth", 3}}}}, bad);
    EXPECT_EQ(cli({"run-all", "--manifest", manifest_.string(), "--config", bad.string(), "--out", t.path().string()}), kExitConfig);
    EXPECT_EQ(cli({"run-all", "--config", config_path_.string(), "--out", t.path().string()}), kExitConfig);
    EXPECT_EQ(cli({"frobnicate"}), kExitConfig);
    EXPECT_EQ(cli({"preprocess", "--manifest", (t.path() / "none.json").string(), "--out", t.path().string()}), kExitRuntime);
    std::ofstream(t.path() / "broken_manifest.json") << R"({"version": 1, "cases": [{"case_id": "x"}]})";
    EXPECT_EQ(cli({"preprocess", "--manifest", (t.path() / "broken_manifest.json").string(), "--out", t.path().string()}), kExitConfig);
    EXPECT_EQ(cli({"detect", "--out", (t.path() / "empty").string(), "-q"}), kExitRuntime);
}

}  // namespace
}  // namespace prorad
