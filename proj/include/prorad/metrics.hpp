#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "prorad/volume.hpp"

namespace prorad {

/// Mann-Whitney AUC: P(s+ > s-) + 0.5 P(s+ = s-). Labels are 0/1.
/// SingleClass unless both classes are present.
[[nodiscard]] double auroc(std::span<const double> scores, std::span<const int> labels);

struct RocCurve {
    std::vector<double> thresholds;  // descending; first is +inf
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;  // trapezoidal area
};

/// One point per distinct score (decision s >= t), plus the (0, 0) origin.
[[nodiscard]] RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

struct AucInterval {
    double auc = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

struct DelongResult {
    AucInterval a;
    AucInterval b;
    double covariance = 0.0;
    double z = 0.0;
    double p_value = 1.0;
};

/// Placement-value variance estimate for one AUC, 95% normal CI clamped to [0, 1].
[[nodiscard]] AucInterval auc_with_ci(std::span<const double> scores, std::span<const int> labels);

/// Paired comparison of two scorings of one label vector; two-sided normal p-value.
/// Zero variance of the difference gives p = 1 when the AUCs agree and 0 otherwise.
[[nodiscard]] DelongResult delong_compare(std::span<const double> scores_a, std::span<const double> scores_b,
                                          std::span<const int> labels);

struct PredictedLesion {
    int id = 0;
    double score = 0.0;
};

struct LesionHit {
    int pred_id = 0;
    int gt_id = 0;
    double iou = 0.0;
};

struct LesionMatchResult {
    std::vector<LesionHit> hits;
    std::vector<int> false_positives;  // pred ids
    std::vector<int> missed;           // gt ids
};

inline constexpr double kMinHitIou = 0.10;

/// Greedy assignment by descending prediction score (ties: higher IoU, then lower ids) of
/// pairs with IoU >= 0.10. Only `gt_ids` count as ground truth; other gt labels are
/// background. Every prediction that is not a hit is a false positive.
[[nodiscard]] LesionMatchResult match_lesions(const LabelVolume& pred, std::span<const PredictedLesion> preds,
                                              const LabelVolume& gt, std::span<const int> gt_ids);

/// |A n B| * 10 >= |A u B| in exact integer arithmetic.
[[nodiscard]] constexpr bool iou_is_hit(std::uint64_t inter, std::uint64_t uni) noexcept {
    return uni > 0 && inter * 10 >= uni;
}

struct ScoredDetection {
    double score = 0.0;
    bool hit = false;
};

/// Detections of one case after matching at full sensitivity. Because the greedy match
/// visits predictions in score order, dropping every detection below a threshold leaves
/// the remaining assignments unchanged, so one match serves the whole sweep.
struct CaseDetections {
    std::vector<ScoredDetection> detections;
    int num_gt = 0;
};

struct FrocPoint {
    double threshold = 0.0;
    double fp_per_case = 0.0;
    double sensitivity = 0.0;
    std::int64_t hits = 0;
    std::int64_t false_positives = 0;
};

struct FrocCurve {
    std::vector<FrocPoint> points;  // threshold descending, fp non-decreasing
    std::int64_t total_gt = 0;
    std::int64_t cases = 0;
};

[[nodiscard]] FrocCurve froc(std::span<const CaseDetections> cases);

/// Best sensitivity reached at a false-positive rate <= fp_rate (step interpolation).
[[nodiscard]] double sensitivity_at_fp(const FrocCurve& curve, double fp_rate);

struct PrPoint {
    double threshold = 0.0;
    double recall = 0.0;
    double precision = 0.0;
};

/// Step-sum AP with tied scores grouped; 0 when there are no detections.
[[nodiscard]] double average_precision(std::span<const CaseDetections> cases, std::int64_t total_gt,
                                       std::vector<PrPoint>* curve = nullptr);

struct OperatingPoint {
    double threshold = 0.0;
    std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;  // 0 when nothing is called positive
};

[[nodiscard]] OperatingPoint operating_point(std::span<const double> scores, std::span<const int> labels, double t);

/// Mean binary cross-entropy with probabilities clipped to [1e-15, 1 - 1e-15].
[[nodiscard]] double log_loss(std::span<const double> probabilities, std::span<const double> labels);

}  // namespace prorad
