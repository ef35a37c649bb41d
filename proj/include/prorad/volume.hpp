#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "prorad/error.hpp"

namespace prorad {

using Index3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;

/// Axis-aligned voxel grid: world(p) = origin + spacing * index. Direction cosines are
/// not representable, oblique inputs are rejected at load time.
struct Grid {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    [[nodiscard]] std::size_t voxel_count() const noexcept {
        return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    }
    [[nodiscard]] std::size_t linear(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return static_cast<std::size_t>(x + dims[0] * (y + dims[1] * z));
    }
    [[nodiscard]] Index3 unravel(std::size_t idx) const noexcept {
        const auto i = static_cast<std::int64_t>(idx);
        return {i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])};
    }
    [[nodiscard]] bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
    }
    [[nodiscard]] double voxel_volume() const noexcept { return spacing[0] * spacing[1] * spacing[2]; }

    /// Throws InvalidArgument unless dims >= 1 and spacing > 0.
    void validate() const;

    /// Same dims, and spacing/origin equal within `tol_mm`.
    [[nodiscard]] bool same_frame(const Grid& other, double tol_mm = 1e-3) const noexcept;
};

/// Scalar field on a Grid, x-fastest layout.
template <typename T>
class Image {
public:
    using value_type = T;

    Image() = default;
    explicit Image(Grid grid, T fill = T{}) : grid_(checked(grid)), values_(grid_.voxel_count(), fill) {}
    Image(Grid grid, std::vector<T> values) : grid_(checked(grid)), values_(std::move(values)) {
        if (values_.size() != grid_.voxel_count()) {
            throw Error(ErrorCode::InvalidArgument, "value count does not match grid dims");
        }
    }

    [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
    [[nodiscard]] const Index3& dims() const noexcept { return grid_.dims; }
    [[nodiscard]] const Vec3& spacing() const noexcept { return grid_.spacing; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    [[nodiscard]] T& operator[](std::size_t i) noexcept { return values_[i]; }
    [[nodiscard]] const T& operator[](std::size_t i) const noexcept { return values_[i]; }
    [[nodiscard]] T& at(std::int64_t x, std::int64_t y, std::int64_t z) noexcept {
        return values_[grid_.linear(x, y, z)];
    }
    [[nodiscard]] const T& at(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return values_[grid_.linear(x, y, z)];
    }

    [[nodiscard]] std::span<T> values() noexcept { return values_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return values_; }

private:
    static Grid checked(const Grid& g) {
        g.validate();
        return g;
    }

    Grid grid_;
    std::vector<T> values_;
};

using Volume3D = Image<double>;
using Mask3D = Image<std::uint8_t>;
using LabelVolume = Image<std::int32_t>;

enum class Interpolation { Linear, Nearest };

struct BoundingBox {
    Index3 lo;
    Index3 hi;  // inclusive
};

/// Resamples each slice to the target in-plane spacing; slice spacing is kept. The first
/// voxel center stays at the source origin and dims become round(n * s / target), so the
/// physical extent is preserved within one voxel. Samples past the last source center are
/// edge-clamped.
[[nodiscard]] Volume3D resample_inplane(const Volume3D& vol, double target_sx, double target_sy,
                                        Interpolation mode);
[[nodiscard]] Mask3D resample_inplane(const Mask3D& mask, double target_sx, double target_sy);

/// Samples `src` at every voxel center of `ref`, trilinear or nearest, clamp-to-edge.
[[nodiscard]] Volume3D resample_to_grid(const Volume3D& src, const Grid& ref, Interpolation mode);
[[nodiscard]] Mask3D resample_to_grid(const Mask3D& src, const Grid& ref);
[[nodiscard]] LabelVolume resample_to_grid(const LabelVolume& src, const Grid& ref);

/// Exact Euclidean distance (mm) from each in-mask voxel center to the nearest
/// out-of-mask voxel center; voxels beyond the image border count as background.
/// Zero outside the mask.
[[nodiscard]] Volume3D distance_to_boundary(const Mask3D& mask);

[[nodiscard]] BoundingBox mask_bbox(const Mask3D& mask);

[[nodiscard]] std::size_t count_nonzero(const Mask3D& mask) noexcept;

template <typename A, typename B>
void require_same_grid(const Image<A>& a, const Image<B>& b) {
    if (!a.grid().same_frame(b.grid())) {
        throw Error(ErrorCode::GridMismatch, "volumes are not on the same grid");
    }
}

}  // namespace prorad
