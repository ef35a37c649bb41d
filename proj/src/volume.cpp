#include "prorad/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace prorad {

void Grid::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            throw Error(ErrorCode::InvalidArgument, "grid dims must be >= 1");
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw Error(ErrorCode::InvalidArgument, "grid spacing must be positive");
        }
        if (!std::isfinite(origin[a])) {
            throw Error(ErrorCode::InvalidArgument, "grid origin must be finite");
        }
    }
}

bool Grid::same_frame(const Grid& other, double tol_mm) const noexcept {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] != other.dims[a]) return false;
        if (std::abs(spacing[a] - other.spacing[a]) > tol_mm) return false;
        if (std::abs(origin[a] - other.origin[a]) > tol_mm) return false;
    }
    return true;
}

namespace {

// Continuous index u along one axis mapped to (i0, i1, t) for linear interpolation with
// clamp-to-edge.
struct Tap {
    std::int64_t i0;
    std::int64_t i1;
    double t;
};

Tap linear_tap(double u, std::int64_t n) {
    if (u <= 0.0 || n == 1) return {0, 0, 0.0};
    const double last = static_cast<double>(n - 1);
    if (u >= last) return {n - 1, n - 1, 0.0};
    const double f = std::floor(u);
    const auto i0 = static_cast<std::int64_t>(f);
    const double t = u - f;
    return {i0, t > 0.0 ? i0 + 1 : i0, t};
}

std::int64_t nearest_tap(double u, std::int64_t n) {
    const auto i = static_cast<std::int64_t>(std::floor(u + 0.5));
    return std::clamp<std::int64_t>(i, 0, n - 1);
}

double lerp(double a, double b, double t) { return t == 0.0 ? a : a * (1.0 - t) + b * t; }

template <typename T>
Image<T> sample_nearest(const Image<T>& src, const Grid& out) {
    const Grid& g = src.grid();
    Image<T> dst(out);
    std::vector<std::int64_t> xs(static_cast<std::size_t>(out.dims[0]));
    std::vector<std::int64_t> ys(static_cast<std::size_t>(out.dims[1]));
    std::vector<std::int64_t> zs(static_cast<std::size_t>(out.dims[2]));
    auto fill_axis = [&](std::vector<std::int64_t>& taps, int a) {
        for (std::size_t i = 0; i < taps.size(); ++i) {
            const double w = out.origin[a] + out.spacing[a] * static_cast<double>(i);
            taps[i] = nearest_tap((w - g.origin[a]) / g.spacing[a], g.dims[a]);
        }
    };
    fill_axis(xs, 0);
    fill_axis(ys, 1);
    fill_axis(zs, 2);
    std::size_t o = 0;
    for (auto z : zs)
        for (auto y : ys)
            for (auto x : xs) dst[o++] = src.at(x, y, z);
    return dst;
}

Volume3D sample_linear(const Volume3D& src, const Grid& out) {
    const Grid& g = src.grid();
    Volume3D dst(out);
    auto taps_for = [&](int a) {
        std::vector<Tap> taps(static_cast<std::size_t>(out.dims[a]));
        for (std::size_t i = 0; i < taps.size(); ++i) {
            const double w = out.origin[a] + out.spacing[a] * static_cast<double>(i);
            taps[i] = linear_tap((w - g.origin[a]) / g.spacing[a], g.dims[a]);
        }
        return taps;
    };
    const auto xs = taps_for(0);
    const auto ys = taps_for(1);
    const auto zs = taps_for(2);
    std::size_t o = 0;
    for (const auto& tz : zs) {
        for (const auto& ty : ys) {
            for (const auto& tx : xs) {
                auto plane = [&](std::int64_t z) {
                    const double a = lerp(src.at(tx.i0, ty.i0, z), src.at(tx.i1, ty.i0, z), tx.t);
                    const double b = lerp(src.at(tx.i0, ty.i1, z), src.at(tx.i1, ty.i1, z), tx.t);
                    return lerp(a, b, ty.t);
                };
                const double p0 = plane(tz.i0);
                dst[o++] = tz.t == 0.0 ? p0 : lerp(p0, plane(tz.i1), tz.t);
            }
        }
    }
    return dst;
}

Grid inplane_grid(const Grid& g, double tx, double ty) {
    if (!(tx > 0.0) || !(ty > 0.0) || !std::isfinite(tx) || !std::isfinite(ty)) {
        throw Error(ErrorCode::InvalidArgument, "target in-plane spacing must be positive");
    }
    Grid out = g;
    out.spacing[0] = tx;
    out.spacing[1] = ty;
    out.dims[0] = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(g.dims[0]) * g.spacing[0] / tx));
    out.dims[1] = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(g.dims[1]) * g.spacing[1] / ty));
    return out;
}

// One-dimensional squared-distance transform of sampled function f with sample spacing
// w (lower envelope of parabolas). Infinite entries are not sites.
void edt_1d(const double* f, double* d, std::int64_t n, double w, std::vector<std::int64_t>& v,
            std::vector<double>& z) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const double w2 = w * w;
    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n) + 1);
    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        const double fq = f[q] + w2 * static_cast<double>(q) * static_cast<double>(q);
        while (k >= 0) {
            const std::int64_t p = v[static_cast<std::size_t>(k)];
            const double fp = f[p] + w2 * static_cast<double>(p) * static_cast<double>(p);
            const double s = (fq - fp) / (2.0 * w2 * static_cast<double>(q - p));
            if (s <= z[static_cast<std::size_t>(k)]) {
                --k;
            } else {
                break;
            }
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
        } else {
            const std::int64_t p = v[static_cast<std::size_t>(k)];
            const double fp = f[p] + w2 * static_cast<double>(p) * static_cast<double>(p);
            ++k;
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = (fq - fp) / (2.0 * w2 * static_cast<double>(q - p));
        }
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    if (k < 0) {
        std::fill(d, d + n, kInf);
        return;
    }
    std::int64_t j = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(j) + 1] < static_cast<double>(q)) ++j;
        const std::int64_t p = v[static_cast<std::size_t>(j)];
        const double dq = w * static_cast<double>(q - p);
        d[q] = dq * dq + f[p];
    }
}

}  // namespace

Volume3D resample_inplane(const Volume3D& vol, double target_sx, double target_sy,
                          Interpolation mode) {
    const Grid out = inplane_grid(vol.grid(), target_sx, target_sy);
    if (out.same_frame(vol.grid(), 0.0)) return vol;
    return mode == Interpolation::Linear ? sample_linear(vol, out) : sample_nearest(vol, out);
}

Mask3D resample_inplane(const Mask3D& mask, double target_sx, double target_sy) {
    const Grid out = inplane_grid(mask.grid(), target_sx, target_sy);
    if (out.same_frame(mask.grid(), 0.0)) return mask;
    return sample_nearest(mask, out);
}

Volume3D resample_to_grid(const Volume3D& src, const Grid& ref, Interpolation mode) {
    ref.validate();
    if (ref.same_frame(src.grid(), 0.0)) return src;
    return mode == Interpolation::Linear ? sample_linear(src, ref) : sample_nearest(src, ref);
}

Mask3D resample_to_grid(const Mask3D& src, const Grid& ref) {
    ref.validate();
    if (ref.same_frame(src.grid(), 0.0)) return src;
    return sample_nearest(src, ref);
}

LabelVolume resample_to_grid(const LabelVolume& src, const Grid& ref) {
    ref.validate();
    if (ref.same_frame(src.grid(), 0.0)) return src;
    return sample_nearest(src, ref);
}

Volume3D distance_to_boundary(const Mask3D& mask) {
    if (count_nonzero(mask) == 0) {
        throw Error(ErrorCode::EmptyMask, "distance_to_boundary needs a non-empty mask");
    }
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const Grid& g = mask.grid();
    // Pad one background voxel on every side so the image border acts as background.
    const Index3 pd{g.dims[0] + 2, g.dims[1] + 2, g.dims[2] + 2};
    const auto plinear = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        return static_cast<std::size_t>(x + pd[0] * (y + pd[1] * z));
    };
    std::vector<double> field(static_cast<std::size_t>(pd[0] * pd[1] * pd[2]), 0.0);
    for (std::int64_t z = 0; z < g.dims[2]; ++z)
        for (std::int64_t y = 0; y < g.dims[1]; ++y)
            for (std::int64_t x = 0; x < g.dims[0]; ++x)
                if (mask.at(x, y, z) != 0) field[plinear(x + 1, y + 1, z + 1)] = kInf;

    std::vector<std::int64_t> v;
    std::vector<double> zbuf;
    const std::int64_t longest = std::max({pd[0], pd[1], pd[2]});
    std::vector<double> line(static_cast<std::size_t>(longest));
    std::vector<double> out(static_cast<std::size_t>(longest));
    const std::array<std::int64_t, 3> stride{1, pd[0], pd[0] * pd[1]};

    for (int axis = 0; axis < 3; ++axis) {
        const int a1 = (axis + 1) % 3;
        const int a2 = (axis + 2) % 3;
        const std::int64_t n = pd[axis];
        for (std::int64_t j = 0; j < pd[a2]; ++j) {
            for (std::int64_t i = 0; i < pd[a1]; ++i) {
                const std::int64_t base = i * stride[a1] + j * stride[a2];
                for (std::int64_t q = 0; q < n; ++q) line[q] = field[base + q * stride[axis]];
                edt_1d(line.data(), out.data(), n, g.spacing[axis], v, zbuf);
                for (std::int64_t q = 0; q < n; ++q) field[base + q * stride[axis]] = out[q];
            }
        }
    }

    Volume3D dist(g, 0.0);
    for (std::int64_t z = 0; z < g.dims[2]; ++z)
        for (std::int64_t y = 0; y < g.dims[1]; ++y)
            for (std::int64_t x = 0; x < g.dims[0]; ++x)
                if (mask.at(x, y, z) != 0) dist.at(x, y, z) = std::sqrt(field[plinear(x + 1, y + 1, z + 1)]);
    return dist;
}

BoundingBox mask_bbox(const Mask3D& mask) {
    const Grid& g = mask.grid();
    BoundingBox box{{g.dims[0], g.dims[1], g.dims[2]}, {-1, -1, -1}};
    std::size_t i = 0;
    for (std::int64_t z = 0; z < g.dims[2]; ++z)
        for (std::int64_t y = 0; y < g.dims[1]; ++y)
            for (std::int64_t x = 0; x < g.dims[0]; ++x, ++i) {
                if (mask[i] == 0) continue;
                const Index3 p{x, y, z};
                for (int a = 0; a < 3; ++a) {
                    box.lo[a] = std::min(box.lo[a], p[a]);
                    box.hi[a] = std::max(box.hi[a], p[a]);
                }
            }
    if (box.hi[0] < 0) throw Error(ErrorCode::EmptyMask, "mask_bbox of an empty mask");
    return box;
}

std::size_t count_nonzero(const Mask3D& mask) noexcept {
    return static_cast<std::size_t>(
        std::count_if(mask.values().begin(), mask.values().end(), [](auto v) { return v != 0; }));
}

}  // namespace prorad
