#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "prorad/detect.hpp"
#include "prorad/features.hpp"
#include "prorad/gbt.hpp"
#include "prorad/preprocess.hpp"
#include "prorad/shap.hpp"

namespace prorad {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigVersion = 1;

struct PipelineConfig {
    PreprocessConfig preprocess;
    FeatureSpec features;
    SamplingPolicy sampling;
    TrainConfig train;
    bool tune = false;
    int tune_trials = 20;
    SearchSpace search;
    int cv_folds = 5;
    std::optional<double> voxel_youden_t;  // unset: Youden on out-of-fold training predictions
    double lesion_decision_t = 0.76;
    int connectivity = 26;
    int max_lesions = kMaxLesions;
    LesionAggregation shap_aggregation = LesionAggregation::Mean;
    int shap_top_k = kTopFeatures;
    std::uint64_t seed = 42;
    unsigned threads = 0;  // 0: PRORAD_THREADS or hardware concurrency

    void validate() const;
    /// Master seed pushed into the sampling and training seeds.
    void apply_seed(std::uint64_t s);
};

/// Missing keys keep their defaults; unknown keys and bad values raise Config.
[[nodiscard]] PipelineConfig config_from_json(const Json& j);
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);
[[nodiscard]] Json to_json(const PipelineConfig& c);

/// First 16 hex digits of the SHA-256 of the canonical config JSON. The thread count is
/// excluded since outputs do not depend on it.
[[nodiscard]] std::string config_hash(const PipelineConfig& c);

// Sub-config serialization shared with the model bundle.
[[nodiscard]] Json to_json(const PreprocessConfig& c);
[[nodiscard]] Json to_json(const FeatureSpec& s);
[[nodiscard]] Json to_json(const SamplingPolicy& s);
[[nodiscard]] Json to_json(const TrainConfig& c);
[[nodiscard]] Json to_json(const SearchSpace& s);
[[nodiscard]] Json to_json(const NormalizationStats& s);
[[nodiscard]] PreprocessConfig preprocess_config_from_json(const Json& j);
[[nodiscard]] FeatureSpec feature_spec_from_json(const Json& j);
[[nodiscard]] SamplingPolicy sampling_from_json(const Json& j);
[[nodiscard]] TrainConfig train_config_from_json(const Json& j);
[[nodiscard]] SearchSpace search_space_from_json(const Json& j);
[[nodiscard]] NormalizationStats stats_from_json(const Json& j);

/// Pretty-printed with a trailing newline; identical documents give identical bytes.
void write_json(const Json& j, const std::filesystem::path& path);
[[nodiscard]] Json read_json(const std::filesystem::path& path);

}  // namespace prorad
