#pragma once

#include <span>
#include <string>
#include <vector>

#include "prorad/gbt.hpp"

namespace prorad {

struct ShapVector {
    std::vector<double> phi;  // margin units, one per model feature
    double base = 0.0;        // cover-weighted expected margin
};

/// Cover-weighted expected margin of the ensemble (base of every ShapVector).
[[nodiscard]] double expected_margin(const TreeEnsemble& ens);

/// Exact path-dependent TreeSHAP. MissingCover if any node has non-positive cover.
[[nodiscard]] ShapVector tree_shap(const TreeEnsemble& ens, std::span<const double> row);

/// Row-major batch; phi of row r occupies [r * width, (r + 1) * width).
[[nodiscard]] std::vector<double> tree_shap_batch(const TreeEnsemble& ens, std::span<const double> rows,
                                                  unsigned threads = 1);

enum class LesionAggregation { Mean, Max };

[[nodiscard]] const char* to_string(LesionAggregation a) noexcept;
[[nodiscard]] LesionAggregation lesion_aggregation_from_string(const std::string& s);

struct LesionExplanation {
    int lesion_id = 0;
    std::size_t voxels = 0;
    double base = 0.0;
    double mean_margin = 0.0;
    LesionAggregation aggregation = LesionAggregation::Mean;
    std::vector<double> phi;      // per feature: mean phi, or phi at the voxel of largest |phi| under Max
    std::vector<double> abs_phi;  // per feature: mean |phi|, or max |phi| under Max
    std::vector<int> top;         // feature indices by abs_phi descending, ties in canonical order
};

inline constexpr int kTopFeatures = 20;

/// EmptyLesion when `rows` is empty.
[[nodiscard]] LesionExplanation explain_lesion(const TreeEnsemble& ens, int lesion_id, std::span<const double> rows,
                                               int k = kTopFeatures, LesionAggregation agg = LesionAggregation::Mean,
                                               unsigned threads = 1);

}  // namespace prorad
