#pragma once

#include <span>
#include <string>
#include <vector>

#include "prorad/case.hpp"
#include "prorad/volume.hpp"

namespace prorad {

/// y = (x - low) / (high - low), unclamped.
[[nodiscard]] Volume3D dual_reference_normalize(const Volume3D& t2w, double ref_low, double ref_high);

/// Median of `vol` over the mask (mean of the two middle values for even counts).
[[nodiscard]] double masked_median(const Volume3D& vol, const Mask3D& mask);

struct AdcFitResult {
    Volume3D adc;  // mm^2/s, >= 0
    Volume3D s0;
    Mask3D valid;  // voxels with >= 2 positive in-range samples
};

/// Log-linear least squares ln S = ln S0 - b ADC per voxel over samples with S > 0 and b
/// in [b_min, b_max]. Throws InsufficientBValues if fewer than two series fall in range.
[[nodiscard]] AdcFitResult fit_adc(std::span<const DwiSample> series, double b_min = 50.0, double b_max = 800.0);

/// S0 exp(-b ADC); 0 on invalid voxels.
[[nodiscard]] Volume3D synthesize_high_bvalue(const AdcFitResult& fit, double b_target);

enum class StatsScope { Global, Patient };
enum class Channel { T2w, Adc, Hbv };

[[nodiscard]] const char* to_string(StatsScope s) noexcept;
[[nodiscard]] const char* to_string(Channel c) noexcept;
[[nodiscard]] StatsScope stats_scope_from_string(const std::string& s);
[[nodiscard]] Channel channel_from_string(const std::string& s);

struct NormalizationStats {
    double mean = 0.0;
    double std = 1.0;  // population
    StatsScope scope = StatsScope::Patient;
    Channel channel = Channel::Adc;
};

struct MaskedVolume {
    const Volume3D* volume;
    const Mask3D* mask;
};

/// Pools every in-mask voxel of the inputs. Patient scope takes exactly one input.
[[nodiscard]] NormalizationStats compute_stats(std::span<const MaskedVolume> inputs, StatsScope scope, Channel channel);

/// z = (x - mean) / std at every voxel; the mask only ever selects where stats come from.
[[nodiscard]] Volume3D gaussian_normalize(const Volume3D& vol, const NormalizationStats& stats);
[[nodiscard]] Volume3D gaussian_denormalize(const Volume3D& z, const NormalizationStats& stats);

/// Which scope supplies the mean and which the standard deviation.
enum class NormalizationPairing {
    MeanGlobalStdPatient,  // literal reading, default
    MeanPatientStdGlobal,
    BothGlobal,
    BothPatient,
};
[[nodiscard]] const char* to_string(NormalizationPairing p) noexcept;
[[nodiscard]] NormalizationPairing pairing_from_string(const std::string& s);

[[nodiscard]] NormalizationStats pair_stats(const NormalizationStats& global, const NormalizationStats& patient,
                                            NormalizationPairing pairing);

struct PreprocessConfig {
    double inplane_spacing = 0.5;  // mm
    Interpolation t2w_interpolation = Interpolation::Linear;
    double adc_b_min = 50.0;
    double adc_b_max = 800.0;
    double hbv_b = 1400.0;
    NormalizationPairing pairing = NormalizationPairing::MeanGlobalStdPatient;
};

/// Everything feature extraction needs, on the resampled T2W grid.
struct PreparedCase {
    std::string case_id;
    std::string split;
    Volume3D t2w_norm;
    Volume3D adc;        // mm^2/s
    Volume3D hbv;        // signal units
    Volume3D adc_norm;
    Volume3D hbv_norm;
    Mask3D prostate;
    Mask3D pz;
    std::optional<Volume3D> pz_likelihood;
    std::optional<LabelVolume> gt_labels;
    std::vector<GtLesion> gt_lesions;
    std::optional<int> pirads_patient;
    double ref_low = 0.0;
    double ref_high = 1.0;
};

/// Stage one: resampling, T2W normalization and ADC/HBV derivation. adc_norm/hbv_norm are
/// left empty until normalize_diffusion() is called with cohort statistics.
[[nodiscard]] PreparedCase prepare_case(const CaseRecord& c, const PreprocessConfig& cfg);

struct GlobalStats {
    NormalizationStats adc{0.0, 1.0, StatsScope::Global, Channel::Adc};
    NormalizationStats hbv{0.0, 1.0, StatsScope::Global, Channel::Hbv};
};

/// Pools in-prostate ADC and HBV over the given (training) cases.
[[nodiscard]] GlobalStats compute_global_stats(std::span<const PreparedCase* const> cases);

void normalize_diffusion(PreparedCase& c, const GlobalStats& global, NormalizationPairing pairing);

}  // namespace prorad
