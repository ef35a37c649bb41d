#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prorad/preprocess.hpp"
#include "prorad/texture.hpp"
#include "prorad/volume.hpp"

namespace prorad {

inline constexpr std::size_t kAnatomicalCount = 5;
inline constexpr std::size_t kFeatureCount =
    texture::kT2wCount + 2 * texture::kFirstOrderCount + kAnatomicalCount;  // 137
inline constexpr int kFeatureFormatVersion = 1;

/// Column offsets inside a feature row.
inline constexpr std::size_t kAdcOffset = texture::kT2wCount;
inline constexpr std::size_t kHbvOffset = kAdcOffset + texture::kFirstOrderCount;
inline constexpr std::size_t kAnatOffset = kHbvOffset + texture::kFirstOrderCount;

/// Canonical column names, version 1. Reordering them is a format version bump.
[[nodiscard]] const std::vector<std::string>& feature_names();

enum class Discretization { PerWindow, PerImage };

struct FeatureSpec {
    double bin_width = 10.0;
    int kernel_radius = 2;
    /// Normalized channels are multiplied by this before binning; unit-scale intensities
    /// with bin width 10 would otherwise fall into a single bin.
    double intensity_scale = 100.0;
    Discretization discretization = Discretization::PerWindow;
    double pzl_sigma_mm = 3.0;

    void validate() const;
};

struct AnatomicalMaps {
    Volume3D rdb;
    Volume3D xpos;
    Volume3D ypos;
    Volume3D zpos;
    Volume3D pzl;
};

/// RDB = boundary distance / its in-mask max; positions relative to the prostate bbox
/// (0 when the bbox is one voxel thick); PZL = supplied likelihood or the PZ mask
/// smoothed by a Gaussian of `pzl_sigma_mm`, clamped to [0, 1]. Zero outside the prostate
/// except PZL.
[[nodiscard]] AnatomicalMaps anatomical_maps(const Mask3D& prostate, const Mask3D& pz,
                                             const Volume3D* pz_likelihood, double pzl_sigma_mm = 3.0);

/// Separable Gaussian (sigma in mm per axis, truncated at 3 sigma, zero beyond the image).
[[nodiscard]] Volume3D gaussian_smooth(const Volume3D& v, double sigma_mm);

inline constexpr std::int8_t kLabelUnknown = -1;

struct FeatureMatrix {
    std::string case_id;
    std::string config_hash;
    std::vector<std::int64_t> voxel_index;
    std::vector<std::int8_t> label;  // 1 csPCa, 0 not, -1 unknown
    std::vector<double> values;      // row-major, kFeatureCount per row

    [[nodiscard]] std::size_t rows() const noexcept { return voxel_index.size(); }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {values.data() + r * kFeatureCount, kFeatureCount};
    }
};

/// One row per prostate voxel in linear-index order. Windows are (2r+1)^2 in-plane,
/// clipped at the image border only.
[[nodiscard]] FeatureMatrix extract_case(const PreparedCase& c, const FeatureSpec& spec, unsigned threads);

/// Per-voxel label: 1 where the gt label's lesion has grade group >= 2.
[[nodiscard]] std::vector<std::int8_t> voxel_labels(const PreparedCase& c, std::span<const std::int64_t> voxels);

void write_feature_csv(const FeatureMatrix& m, const std::filesystem::path& path);
void write_feature_binary(const FeatureMatrix& m, const std::filesystem::path& path);
[[nodiscard]] FeatureMatrix read_feature_binary(const std::filesystem::path& path);

}  // namespace prorad
