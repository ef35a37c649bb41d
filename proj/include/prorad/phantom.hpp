#pragma once

#include <cstdint>
#include <filesystem>

#include "prorad/volume.hpp"

namespace prorad {

/// Synthetic bpMRI cohort: ellipsoidal prostate split into PZ and TZ, spherical lesions (radius 5 to 6.5 mm)
/// that are T2-dark with low ADC, DWI at b = 50/400/800, muscle and fat reference masks.
/// Even-numbered cases carry csPCa; the first half of the cases is the train split.
struct PhantomSpec {
    int cases = 20;
    Index3 dims{96, 96, 10};
    Vec3 spacing{0.5, 0.5, 3.0};
    std::uint64_t seed = 7;
    double noise = 0.02;   // relative sd of the additive Gaussian noise
    bool with_pirads = true;
};

/// Writes the cohort under `dir` and returns the manifest path. Output bytes depend only
/// on the spec.
std::filesystem::path write_phantom_cohort(const PhantomSpec& spec, const std::filesystem::path& dir);

}  // namespace prorad
