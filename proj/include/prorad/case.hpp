#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prorad/volume.hpp"

namespace prorad {

struct DwiEntry {
    double b = 0.0;
    std::filesystem::path path;
};

struct LesionEntry {
    int label = 0;
    int grade_group = 1;
    std::optional<int> pirads;
};

/// Reference tissue intensities for dual-reference T2W normalization: explicit numbers,
/// or masks whose median T2W intensity is used.
struct ReferenceSpec {
    std::optional<double> low;
    std::optional<double> high;
    std::optional<std::filesystem::path> low_mask;
    std::optional<std::filesystem::path> high_mask;
};

struct CaseEntry {
    std::string case_id;
    std::filesystem::path t2w;
    std::vector<DwiEntry> dwi;
    std::optional<std::filesystem::path> adc;
    std::optional<std::filesystem::path> hbv;
    std::filesystem::path prostate;
    std::filesystem::path pz;
    std::filesystem::path tz;
    std::optional<std::filesystem::path> pz_likelihood;
    std::optional<std::filesystem::path> gt_labels;
    std::vector<LesionEntry> lesions;
    std::optional<int> pirads_patient;
    std::string split;  // "train" or "test"
    ReferenceSpec t2w_ref;
};

struct DatasetManifest {
    int version = 1;
    std::vector<CaseEntry> cases;
};

/// Parses the manifest JSON. Relative paths resolve against the manifest's directory.
/// Throws Schema on malformed documents, duplicate case ids or duplicate paths.
[[nodiscard]] DatasetManifest parse_manifest(const std::filesystem::path& path);
[[nodiscard]] DatasetManifest parse_manifest_text(const std::string& text, const std::filesystem::path& base_dir);

struct GtLesion {
    int label = 0;
    int grade_group = 1;
    std::optional<int> pirads;
};

struct DwiSample {
    double b = 0.0;
    Volume3D signal;
};

/// One patient with every volume on the T2W grid.
struct CaseRecord {
    std::string case_id;
    std::string split;
    Volume3D t2w;
    std::vector<DwiSample> dwi;
    std::optional<Volume3D> adc;
    std::optional<Volume3D> hbv;
    Mask3D prostate;
    Mask3D pz;
    Mask3D tz;
    std::optional<Volume3D> pz_likelihood;
    std::optional<LabelVolume> gt_labels;
    std::vector<GtLesion> gt_lesions;
    std::optional<int> pirads_patient;
    std::optional<double> ref_low;
    std::optional<double> ref_high;
    std::optional<Mask3D> ref_low_mask;
    std::optional<Mask3D> ref_high_mask;

    /// True when any lesion has grade group >= 2.
    [[nodiscard]] bool has_cspca() const noexcept;
};

/// Reads every file of the entry and harmonizes it onto the T2W grid (nearest for masks
/// and labels). Fails with MissingMask, FrameMismatch or LabelMismatch; never returns a
/// partially valid case.
[[nodiscard]] CaseRecord load_case(const CaseEntry& entry);

/// Harmonizes onto `ref`: returned unchanged when already on it (within the frame
/// tolerance), otherwise resampled. FrameMismatch when the volumes do not overlap.
[[nodiscard]] Volume3D harmonize(const Volume3D& v, const Grid& ref, Interpolation mode);
[[nodiscard]] Mask3D harmonize(const Mask3D& m, const Grid& ref);
[[nodiscard]] LabelVolume harmonize(const LabelVolume& l, const Grid& ref);

}  // namespace prorad
