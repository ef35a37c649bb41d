#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prorad/volume.hpp"

namespace prorad {

struct OperatingThresholds {
    double voxel_youden_t = 0.5;
    double lesion_decision_t = 0.76;

    void validate() const;  // Config unless both lie in (0, 1)
};

/// argmax over unique scores t of sensitivity + specificity - 1 for the rule s >= t.
/// Ties prefer the smallest threshold. Counts are compared exactly in integers.
[[nodiscard]] double youden_threshold(std::span<const double> scores, std::span<const int> labels);

struct Components {
    LabelVolume labels;                // 0 background, 1..n in scanline order of first voxel
    std::vector<std::int64_t> sizes;   // sizes[i] is the voxel count of label i + 1
};

/// connectivity is 6, 18 or 26.
[[nodiscard]] Components connected_components_3d(const Mask3D& binary, int connectivity = 26);

struct PeakScore {
    double score = 0.0;
    std::size_t peak_index = 0;
};

inline constexpr double kPeakRadiusMm = 5.0;

/// Max over lesion voxels of the tpmap mean within a physical sphere (voxel centers within
/// radius_mm, clipped at the image border, not restricted to the lesion). Ties take the
/// lowest linear index. EmptyLesion if `lesion_voxels` is empty.
[[nodiscard]] PeakScore peak_score(const Volume3D& tpmap, std::span<const std::size_t> lesion_voxels,
                                   double radius_mm = kPeakRadiusMm);
[[nodiscard]] PeakScore peak_score(const Volume3D& tpmap, const Mask3D& lesion, double radius_mm = kPeakRadiusMm);

/// Number of voxel centers within radius_mm of a center voxel on an unbounded grid.
[[nodiscard]] std::size_t sphere_voxel_count(const Vec3& spacing, double radius_mm = kPeakRadiusMm);

struct DetectedLesion {
    int id = 0;
    std::int64_t voxel_count = 0;
    double score = 0.0;
    std::size_t peak_index = 0;
};

struct DetectionMap {
    LabelVolume labels;
    std::vector<DetectedLesion> lesions;  // ids 1..K, K <= max_lesions
};

inline constexpr int kMaxLesions = 3;

/// Binarizes at voxel_youden_t (>=), labels components, and keeps the largest
/// `max_lesions` by voxel count (ties: higher peak score, then lower label).
[[nodiscard]] DetectionMap build_detection_map(const Volume3D& tpmap, const OperatingThresholds& thresholds,
                                               int connectivity = 26, int max_lesions = kMaxLesions);

/// Max lesion score, 0 for an empty map.
[[nodiscard]] double patient_score(const DetectionMap& dm) noexcept;

/// Scatters per-voxel probabilities into a zero volume on `grid`.
[[nodiscard]] Volume3D tpmap_from_predictions(const Grid& grid, std::span<const std::int64_t> voxel_index,
                                              std::span<const double> probabilities);

}  // namespace prorad
