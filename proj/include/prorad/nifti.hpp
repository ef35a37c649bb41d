#pragma once

#include <filesystem>
#include <string>

#include "prorad/volume.hpp"

namespace prorad {

/// On-disk voxel types we read and write (NIfTI-1 datatype codes).
enum class NiftiType : short {
    U8 = 2,
    I16 = 4,
    I32 = 8,
    F32 = 16,
    F64 = 64,
    U16 = 512,
};

struct NiftiInfo {
    NiftiType datatype = NiftiType::F32;
    double scl_slope = 1.0;
    double scl_inter = 0.0;
    std::string descrip;
};

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz, either byte order). Voxels are
/// returned as doubles with scl_slope/scl_inter applied. The spatial transform must be
/// axis-aligned; axes with negative direction are flipped so the returned grid has
/// positive spacing in the same world frame.
///
/// Distinct ErrorCodes: BadMagic, UnsupportedDatatype, BadDimension, TruncatedFile,
/// ObliqueOrientation, IoFailure.
[[nodiscard]] Volume3D read_nifti(const std::filesystem::path& path, NiftiInfo* info = nullptr);

/// Nonzero voxels become 1.
[[nodiscard]] Mask3D read_nifti_mask(const std::filesystem::path& path);

/// Values must be integral and non-negative.
[[nodiscard]] LabelVolume read_nifti_labels(const std::filesystem::path& path);

/// Writes .nii, or gzip-compressed when the path ends in ".gz". `descrip` is truncated to
/// the 79 characters the header has room for. Output bytes depend only on the arguments.
void write_nifti(const Volume3D& vol, const std::filesystem::path& path,
                 NiftiType type = NiftiType::F32, const std::string& descrip = {});
void write_nifti(const Mask3D& mask, const std::filesystem::path& path, const std::string& descrip = {});
void write_nifti(const LabelVolume& labels, const std::filesystem::path& path,
                 const std::string& descrip = {});

}  // namespace prorad
