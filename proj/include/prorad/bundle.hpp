#pragma once

#include <filesystem>
#include <string>

#include "prorad/config.hpp"

namespace prorad {

inline constexpr int kModelFormatVersion = 1;

/// Everything needed to score a new case: the ensemble plus the preprocessing and
/// feature settings it was trained under.
struct ModelBundle {
    TreeEnsemble ensemble;
    std::string config_hash;
    TrainConfig train_config;
    SamplingPolicy sampling;
    FeatureSpec feature_spec;
    PreprocessConfig preprocess;
    GlobalStats stats;
    OperatingThresholds thresholds;
};

[[nodiscard]] Json model_to_json(const ModelBundle& b);

/// Schema on a wrong format tag, version, or missing section (including the
/// normalization stats); Schema as well when the feature names differ from the
/// canonical list.
[[nodiscard]] ModelBundle model_from_json(const Json& j);

void save_model(const ModelBundle& b, const std::filesystem::path& path);
[[nodiscard]] ModelBundle load_model(const std::filesystem::path& path);

}  // namespace prorad
