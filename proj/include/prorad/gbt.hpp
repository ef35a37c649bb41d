#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prorad/features.hpp"
#include "prorad/random.hpp"

namespace prorad {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    bool default_left = true;  // unreachable: features are never missing
    double weight = 0.0;       // leaf margin contribution, learning rate folded in
    double gain = 0.0;         // loss reduction of the split (before gamma)
    double cover = 0.0;        // training rows reaching the node

    [[nodiscard]] bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    /// Rows go left when x[feature] < threshold.
    [[nodiscard]] double predict(const double* row) const noexcept;
    [[nodiscard]] int leaf_index(const double* row) const noexcept;
};

struct TreeEnsemble {
    std::vector<Tree> trees;
    double base_margin = 0.0;
    std::vector<std::string> feature_names;

    [[nodiscard]] std::size_t width() const noexcept { return feature_names.size(); }
    [[nodiscard]] double margin(std::span<const double> row) const;
    [[nodiscard]] double predict_proba(std::span<const double> row) const;
    /// Row-major rows of width(); WidthMismatch otherwise.
    [[nodiscard]] std::vector<double> predict_proba(std::span<const double> rows, std::size_t width,
                                                    unsigned threads = 1) const;
};

[[nodiscard]] double sigmoid(double m) noexcept;
[[nodiscard]] double logit(double p) noexcept;

struct TrainConfig {
    int max_depth = 6;
    int num_rounds = 200;
    double learning_rate = 0.1;
    double min_child_weight = 1.0;
    double l2_lambda = 1.0;
    double gamma = 0.0;
    double subsample = 1.0;
    double colsample = 1.0;
    int early_stopping_rounds = 20;  // 0 disables; needs a validation set
    std::uint64_t seed = 42;

    void validate() const;
};

/// Row-major design matrix with per-row targets and patient ids for grouping.
struct Dataset {
    std::size_t width = 0;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<std::string> patient;
    std::vector<std::string> feature_names;

    [[nodiscard]] std::size_t rows() const noexcept { return y.size(); }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept { return {x.data() + r * width, width}; }
    void append(std::span<const double> row, double label, const std::string& patient_id);
};

enum class NegativeRule { MatchPositive, FixedN };

struct SamplingPolicy {
    NegativeRule rule = NegativeRule::MatchPositive;
    std::size_t fixed_n = 500;  // also the fallback for lesion-free patients
    std::uint64_t seed = 42;
};

[[nodiscard]] const char* to_string(NegativeRule r) noexcept;
[[nodiscard]] NegativeRule negative_rule_from_string(const std::string& s);

/// Keeps every labelled-positive row and samples negatives per patient without
/// replacement; unknown-label rows are dropped. Requests beyond the available negatives
/// take them all and add a warning.
[[nodiscard]] Dataset assemble_training_set(std::span<const FeatureMatrix> matrices, const SamplingPolicy& policy,
                                            std::vector<std::string>* warnings = nullptr);

struct TrainLog {
    std::vector<double> train_logloss;  // after each round
    std::vector<double> valid_logloss;
    int best_rounds = 0;  // trees kept
};

/// Second-order boosting of the logistic loss with exact greedy splits on presorted
/// columns. With a validation set and early stopping, trailing rounds that did not
/// improve validation log-loss are dropped.
[[nodiscard]] TreeEnsemble train(const Dataset& data, const TrainConfig& cfg, const Dataset* valid = nullptr,
                                 TrainLog* log = nullptr, unsigned threads = 1);

struct FoldAssignment {
    std::vector<std::string> patients;
    std::vector<int> fold;  // per patient
    [[nodiscard]] int fold_of(const std::string& patient) const;
};

/// Stratifies patients by whether they have any positive row, shuffles each stratum
/// and deals patients round-robin over k folds. TooFewPatients unless each class has
/// at least k patients.
[[nodiscard]] FoldAssignment stratified_patient_folds(const Dataset& data, int k, std::uint64_t seed);

struct CvResult {
    std::vector<double> fold_logloss;
    std::vector<double> fold_auroc;
    std::vector<int> fold_rounds;
    std::vector<double> oof_probability;  // per row of the input dataset
    double mean_logloss = 0.0;
    double sd_logloss = 0.0;
    FoldAssignment folds;
};

[[nodiscard]] CvResult cross_validate(const Dataset& data, const TrainConfig& cfg, int k = 5, unsigned threads = 1);

struct SearchSpace {
    int depth_min = 3, depth_max = 8;
    double eta_min = 0.01, eta_max = 0.3;
    int max_rounds = 500;
    double mcw_min = 1.0, mcw_max = 10.0;
    double lambda_min = 0.1, lambda_max = 10.0;
    double gamma_min = 0.0, gamma_max = 5.0;
    double subsample_min = 0.5, subsample_max = 1.0;
    double colsample_min = 0.5, colsample_max = 1.0;
};

struct TrialRecord {
    TrainConfig config;
    double mean_logloss = 0.0;
    double sd_logloss = 0.0;
    int mean_rounds = 0;
};

struct TuneResult {
    TrainConfig best;  // num_rounds set to the mean early-stopped fold length
    std::size_t best_trial = 0;
    std::vector<TrialRecord> trials;
};

[[nodiscard]] TrainConfig sample_config(const SearchSpace& space, Rng& rng, const TrainConfig& base);

/// Seeded random search minimizing mean CV log-loss; ties keep the earliest trial.
[[nodiscard]] TuneResult tune(const Dataset& data, const SearchSpace& space, int trials, std::uint64_t seed,
                              const TrainConfig& base, int k = 5, unsigned threads = 1);

}  // namespace prorad
