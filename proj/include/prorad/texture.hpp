#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace prorad::texture {

inline constexpr std::size_t kFirstOrderCount = 19;
inline constexpr std::size_t kGlcmCount = 24;
inline constexpr std::size_t kGlrlmCount = 16;
inline constexpr std::size_t kGlszmCount = 16;
inline constexpr std::size_t kNgtdmCount = 5;
inline constexpr std::size_t kGldmCount = 14;
inline constexpr std::size_t kTextureCount = kGlcmCount + kGlrlmCount + kGlszmCount + kNgtdmCount + kGldmCount;
/// First-order plus all texture families: the per-voxel T2W block.
inline constexpr std::size_t kT2wCount = kFirstOrderCount + kTextureCount;

/// Coarseness reported when its denominator vanishes (flat windows).
inline constexpr double kCoarsenessCap = 1e6;

extern const std::array<std::string_view, kFirstOrderCount> kFirstOrderNames;
extern const std::array<std::string_view, kGlcmCount> kGlcmNames;
extern const std::array<std::string_view, kGlrlmCount> kGlrlmNames;
extern const std::array<std::string_view, kGlszmCount> kGlszmNames;
extern const std::array<std::string_view, kNgtdmCount> kNgtdmNames;
extern const std::array<std::string_view, kGldmCount> kGldmNames;

/// Rectangular in-plane window, x fastest.
struct WindowView {
    std::span<const double> values;
    int width = 0;
    int height = 0;
};

/// Gray levels 1..ng of a window. Levels are bin indices, so gaps (empty bins) are allowed.
struct QuantizedWindow {
    std::vector<int> levels;
    int width = 0;
    int height = 0;
    int ng = 0;
};

/// g = floor((x - anchor) / bin_width) + 1, anchor = window minimum unless given
/// (per-image discretization passes a global anchor <= every value).
[[nodiscard]] QuantizedWindow quantize(const WindowView& window, double bin_width,
                                       std::optional<double> anchor = std::nullopt);

using FirstOrder = std::array<double, kFirstOrderCount>;
using GlcmFeatures = std::array<double, kGlcmCount>;
using GlrlmFeatures = std::array<double, kGlrlmCount>;
using GlszmFeatures = std::array<double, kGlszmCount>;
using NgtdmFeatures = std::array<double, kNgtdmCount>;
using GldmFeatures = std::array<double, kGldmCount>;

/// Histogram features (entropy, uniformity) use the same bins as quantize(). Variance is
/// the population variance; percentiles interpolate linearly between closest ranks.
[[nodiscard]] FirstOrder first_order(std::span<const double> values, double bin_width,
                                     double voxel_volume = 1.0, std::optional<double> anchor = std::nullopt);

/// In-plane offsets at distance 1: 0, 45, 90 and 135 degrees.
inline constexpr std::array<std::array<int, 2>, 4> kDirections{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}}};

/// Symmetric co-occurrence features averaged over the directions that have pairs.
[[nodiscard]] GlcmFeatures glcm_features(const QuantizedWindow& q);
/// Single direction; returns nullopt when the window has no pair along it.
[[nodiscard]] std::optional<GlcmFeatures> glcm_direction_features(const QuantizedWindow& q, int direction);

[[nodiscard]] GlrlmFeatures glrlm_features(const QuantizedWindow& q);
[[nodiscard]] GlrlmFeatures glrlm_direction_features(const QuantizedWindow& q, int direction);

/// 8-connected zones.
[[nodiscard]] GlszmFeatures glszm_features(const QuantizedWindow& q);
/// 8-neighbourhood inside the window.
[[nodiscard]] NgtdmFeatures ngtdm_features(const QuantizedWindow& q);
/// 8-neighbourhood, alpha = 0. Dependence size counts the center voxel.
[[nodiscard]] GldmFeatures gldm_features(const QuantizedWindow& q);

/// All families for one window: first-order followed by GLCM, GLRLM, GLSZM, NGTDM, GLDM.
void t2w_features(const WindowView& window, double bin_width, double voxel_volume,
                  std::optional<double> anchor, std::span<double, kT2wCount> out);

}  // namespace prorad::texture
