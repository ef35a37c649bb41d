#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "prorad/bundle.hpp"
#include "prorad/hash.hpp"
#include "prorad/random.hpp"
#include "test_util.hpp"

namespace prorad {
namespace {

Dataset random_dataset(std::uint64_t seed, std::size_t rows) {
    Rng rng(seed);
    Dataset d;
    d.width = kFeatureCount;
    d.feature_names = feature_names();
    std::vector<double> row(kFeatureCount);
    for (std::size_t r = 0; r < rows; ++r) {
        for (auto& v : row) v = rng.normal();
        const double y = row[0] + 0.5 * row[7] - 0.3 * row[40] + 0.5 * rng.normal() > 0 ? 1.0 : 0.0;
        d.append(row, y, "p" + std::to_string(r % 10));
    }
    return d;
}

ModelBundle trained_bundle() {
    TrainConfig cfg;
    cfg.num_rounds = 15;
    cfg.max_depth = 4;
    cfg.subsample = 0.8;
    cfg.colsample = 0.7;
    ModelBundle b;
    b.ensemble = train(random_dataset(3, 600), cfg);
    b.config_hash = "0123456789abcdef";
    b.train_config = cfg;
    b.stats.adc = {1.1e-3, 3e-4, StatsScope::Global, Channel::Adc};
    b.stats.hbv = {250.0, 60.0, StatsScope::Global, Channel::Hbv};
    b.thresholds = {0.31, 0.76};
    return b;
}

TEST(Bundle, SaveLoadPredictionRoundTrip) {
    test::TempDir dir;
    const ModelBundle b = trained_bundle();
    save_model(b, dir.path() / "m.json");
    const ModelBundle l = load_model(dir.path() / "m.json");
    EXPECT_EQ(l.config_hash, b.config_hash);
    EXPECT_EQ(l.thresholds.voxel_youden_t, 0.31);
    EXPECT_EQ(l.stats.hbv.mean, 250.0);
    ASSERT_EQ(l.ensemble.trees.size(), b.ensemble.trees.size());
    const Dataset probe = random_dataset(99, 500);
    double worst = 0;
    for (std::size_t r = 0; r < probe.rows(); ++r)
        worst = std::max(worst, std::abs(l.ensemble.predict_proba(probe.row(r)) - b.ensemble.predict_proba(probe.row(r))));
    EXPECT_LE(worst, 1e-12);
    // SHAP needs the covers, which must survive too.
    EXPECT_NO_THROW((void)tree_shap(l.ensemble, probe.row(0)));
}

TEST(Bundle, SerializationIsByteStable) {
    test::TempDir dir;
    const ModelBundle b = trained_bundle();
    save_model(b, dir.path() / "a.json");
    save_model(load_model(dir.path() / "a.json"), dir.path() / "b.json");
    EXPECT_EQ(sha256_file(dir.path() / "a.json"), sha256_file(dir.path() / "b.json"));
}

TEST(Bundle, TamperedDocumentsAreSchemaErrors) {
    const Json good = model_to_json(trained_bundle());
    auto code_of = [](const Json& j) {
        try {
            (void)model_from_json(j);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    Json names = good;
    std::swap(names["feature_names"][0], names["feature_names"][1]);
    EXPECT_EQ(code_of(names), ErrorCode::Schema);
    Json short_names = good;
    short_names["feature_names"].erase(short_names["feature_names"].size() - 1);
    EXPECT_EQ(code_of(short_names), ErrorCode::Schema);
    Json no_stats = good;
    no_stats.erase("normalization_stats");
    EXPECT_EQ(code_of(no_stats), ErrorCode::Schema);
    Json half_stats = good;
    half_stats["normalization_stats"]["hbv"].erase("std");
    EXPECT_EQ(code_of(half_stats), ErrorCode::Schema);
    Json version = good;
    version["version"] = 99;
    EXPECT_EQ(code_of(version), ErrorCode::Schema);
    Json cycle = good;
    cycle["trees"][0][0]["left"] = 0;
    EXPECT_EQ(code_of(cycle), ErrorCode::Schema);
    Json bad_feature = good;
    bad_feature["trees"][0][0]["feature"] = static_cast<int>(kFeatureCount);
    EXPECT_EQ(code_of(bad_feature), ErrorCode::Schema);
    Json wrong_type = good;
    wrong_type["base_margin"] = "zero";
    EXPECT_EQ(code_of(wrong_type), ErrorCode::Schema);
    Json bad_threshold = good;
    bad_threshold["thresholds"]["lesion_decision_t"] = 1.5;
    EXPECT_EQ(code_of(bad_threshold), ErrorCode::Schema);
}

TEST(Bundle, MissingCoverLoadsButCannotBeExplained) {
    Json j = model_to_json(trained_bundle());
    for (auto& node : j["trees"][0]) node.erase("cover");
    const ModelBundle b = model_from_json(j);
    const Dataset probe = random_dataset(5, 1);
    EXPECT_NO_THROW((void)b.ensemble.predict_proba(probe.row(0)));
    try {
        (void)tree_shap(b.ensemble, probe.row(0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingCover);
    }
}

TEST(Config, DefaultsRoundTripAndHashIgnoresThreads) {
    PipelineConfig c;
    const PipelineConfig back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
    PipelineConfig t = c;
    t.threads = 7;
    EXPECT_EQ(config_hash(t), config_hash(c));
    PipelineConfig s = c;
    s.apply_seed(43);
    EXPECT_NE(config_hash(s), config_hash(c));
    EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, MasterSeedDerivesSubSeeds) {
    const PipelineConfig a = config_from_json(Json{{"seed", 11}});
    const PipelineConfig b = config_from_json(Json{{"seed", 12}});
    EXPECT_NE(a.sampling.seed, b.sampling.seed);
    EXPECT_NE(a.train.seed, b.train.seed);
    EXPECT_NE(a.sampling.seed, a.train.seed);
    const PipelineConfig explicit_seed = config_from_json(Json{{"seed", 11}, {"train", {{"seed", 5}}}});
    EXPECT_EQ(explicit_seed.train.seed, 5u);
    EXPECT_EQ(explicit_seed.sampling.seed, a.sampling.seed);
}

TEST(Config, StrictParsing) {
    auto code_of = [](const Json& j) {
        try {
            (void)config_from_json(j);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    EXPECT_EQ(code_of(Json{{"learning_rate", 0.1}}), ErrorCode::Config);
    EXPECT_EQ(code_of(Json{{"train", {{"max_depht", 3}}}}), ErrorCode::Config);
    EXPECT_EQ(code_of(Json{{"train", {{"learning_rate", "fast"}}}}), ErrorCode::Config);
    EXPECT_EQ(code_of(Json{{"train", {{"learning_rate", 0.0}}}}), ErrorCode::Config);
    EXPECT_EQ(code_of(Json{{"thresholds", {{"lesion_decision_t", 2.0}}}}), ErrorCode::Config);
    EXPECT_EQ(code_of(Json{{"detection", {{"connectivity", 8}}}}), ErrorCode::Config);
    EXPECT_EQ(code_of(Json{{"explain", {{"aggregation", "median"}}}}), ErrorCode::Config);
    EXPECT_EQ(code_of(Json{{"version", 2}}), ErrorCode::Config);
    const PipelineConfig ok = config_from_json(Json{{"thresholds", {{"voxel_youden_t", 0.4}}}, {"detection", {{"connectivity", 6}}}});
    EXPECT_EQ(ok.voxel_youden_t.value(), 0.4);
    EXPECT_EQ(ok.connectivity, 6);
    EXPECT_EQ(ok.lesion_decision_t, 0.76);
}

TEST(Config, FileProblemsAreConfigErrors) {
    test::TempDir dir;
    try {
        (void)load_config(dir.path() / "absent.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
    std::ofstream(dir.path() / "bad.json") << "{ not json";
    try {
        (void)load_config(dir.path() / "bad.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
}

}  // namespace
}  // namespace prorad
