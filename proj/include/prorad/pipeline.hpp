#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prorad/bundle.hpp"
#include "prorad/case.hpp"
#include "prorad/config.hpp"

namespace prorad {

/// Output directory layout, one subdirectory per stage.
struct OutputLayout {
    std::filesystem::path root;

    [[nodiscard]] std::filesystem::path preprocess() const { return root / "preprocess"; }
    [[nodiscard]] std::filesystem::path features() const { return root / "features"; }
    [[nodiscard]] std::filesystem::path model_dir() const { return root / "model"; }
    [[nodiscard]] std::filesystem::path model() const { return model_dir() / "model.json"; }
    [[nodiscard]] std::filesystem::path tpmaps() const { return root / "tpmaps"; }
    [[nodiscard]] std::filesystem::path detections() const { return root / "detections"; }
    [[nodiscard]] std::filesystem::path evaluation() const { return root / "evaluation"; }
    [[nodiscard]] std::filesystem::path explanations() const { return root / "explanations"; }
    [[nodiscard]] std::filesystem::path tune() const { return root / "tune"; }
    [[nodiscard]] std::filesystem::path cache() const { return root / ".cache"; }
    [[nodiscard]] std::filesystem::path provenance() const { return root / "provenance.json"; }
};

struct RunContext {
    std::filesystem::path manifest_path;
    DatasetManifest manifest;
    PipelineConfig config;
    std::string config_hash;
    OutputLayout out;
    unsigned threads = 1;
    std::optional<std::filesystem::path> model_path;  // overrides out/model/model.json
    std::function<void(const std::string&)> log;      // progress lines; may be empty
};

struct StageResult {
    std::string stage;
    bool cached = false;
    std::vector<std::string> failed_cases;  // "case_id: reason"
    std::vector<std::string> warnings;
};

// Each stage reads its inputs from the previous stages' directories under ctx.out.
StageResult run_preprocess(const RunContext& ctx);
StageResult run_extract(const RunContext& ctx);
StageResult run_train(const RunContext& ctx);
StageResult run_tune(const RunContext& ctx);
StageResult run_predict(const RunContext& ctx);
StageResult run_detect(const RunContext& ctx);
StageResult run_evaluate(const RunContext& ctx);
StageResult run_explain(const RunContext& ctx);

/// Runs every stage in order, skipping stages whose recorded input key and output
/// hashes still match. Once a stage reruns, every later stage reruns too. A stage
/// failure is rethrown as StageError naming the stage.
std::vector<StageResult> run_all(const RunContext& ctx);

class StageError : public Error {
public:
    StageError(const std::string& stage, const Error& cause)
        : Error(cause.code(), "stage " + stage + ": " + cause.what()), stage_(stage) {}
    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Reconstructs a prepared case from the preprocess directory.
[[nodiscard]] PreparedCase load_prepared_case(const OutputLayout& out, const std::string& case_id);

/// Writes provenance.json: config, seeds, manifest and input file hashes.
void write_provenance(const RunContext& ctx);

}  // namespace prorad
