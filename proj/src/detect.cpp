#include "prorad/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prorad {

void OperatingThresholds::validate() const {
    if (!(voxel_youden_t > 0 && voxel_youden_t < 1)) throw Error(ErrorCode::Config, "voxel_youden_t must lie in (0, 1)");
    if (!(lesion_decision_t > 0 && lesion_decision_t < 1))
        throw Error(ErrorCode::Config, "lesion_decision_t must lie in (0, 1)");
}

double youden_threshold(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
    std::int64_t np = 0, nn = 0;
    for (int l : labels) (l ? np : nn) += 1;
    if (np == 0 || nn == 0) throw Error(ErrorCode::SingleClass, "Youden threshold needs both classes");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    // J * np * nn = tp * nn - fp * np
    std::int64_t tp = 0, fp = 0;
    bool have = false;
    std::int64_t best_j = 0;
    double best_t = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t k = i;
        while (k < idx.size() && scores[idx[k]] == scores[idx[i]]) (labels[idx[k++]] ? tp : fp) += 1;
        const std::int64_t j = tp * nn - fp * np;
        if (!have || j >= best_j) {
            best_j = j;
            best_t = scores[idx[i]];
            have = true;
        }
        i = k;
    }
    return best_t;
}

namespace {

std::vector<Index3> neighbour_offsets(int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw Error(ErrorCode::InvalidArgument, "connectivity must be 6, 18 or 26");
    std::vector<Index3> off;
    for (std::int64_t dz = -1; dz <= 1; ++dz)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const int l1 = static_cast<int>(std::abs(dx) + std::abs(dy) + std::abs(dz));
                if (l1 == 0) continue;
                if (connectivity == 6 && l1 > 1) continue;
                if (connectivity == 18 && l1 > 2) continue;
                off.push_back({dx, dy, dz});
            }
    return off;
}

}  // namespace

Components connected_components_3d(const Mask3D& binary, int connectivity) {
    const auto off = neighbour_offsets(connectivity);
    const Grid& g = binary.grid();
    Components c{LabelVolume(g, 0), {}};
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < binary.size(); ++i) {
        if (!binary[i] || c.labels[i]) continue;
        const int label = static_cast<int>(c.sizes.size()) + 1;
        std::int64_t size = 0;
        c.labels[i] = label;
        stack.assign(1, i);
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            ++size;
            const Index3 p = g.unravel(v);
            for (const auto& o : off) {
                const std::int64_t x = p[0] + o[0], y = p[1] + o[1], z = p[2] + o[2];
                if (!g.contains(x, y, z)) continue;
                const std::size_t u = g.linear(x, y, z);
                if (binary[u] && !c.labels[u]) {
                    c.labels[u] = label;
                    stack.push_back(u);
                }
            }
        }
        c.sizes.push_back(size);
    }
    return c;
}

namespace {

std::vector<Index3> sphere_offsets(const Vec3& s, double r) {
    std::vector<Index3> off;
    const double r2 = r * r * (1 + 1e-12);  // centers exactly on the sphere count as inside
    Index3 ext;
    for (int a = 0; a < 3; ++a) ext[a] = static_cast<std::int64_t>(std::floor(r / s[a] + 1e-9));
    for (std::int64_t dz = -ext[2]; dz <= ext[2]; ++dz)
        for (std::int64_t dy = -ext[1]; dy <= ext[1]; ++dy)
            for (std::int64_t dx = -ext[0]; dx <= ext[0]; ++dx) {
                const double d2 = (dx * s[0]) * (dx * s[0]) + (dy * s[1]) * (dy * s[1]) + (dz * s[2]) * (dz * s[2]);
                if (d2 <= r2) off.push_back({dx, dy, dz});
            }
    return off;
}

}  // namespace

std::size_t sphere_voxel_count(const Vec3& spacing, double radius_mm) { return sphere_offsets(spacing, radius_mm).size(); }

PeakScore peak_score(const Volume3D& tpmap, std::span<const std::size_t> lesion, double radius_mm) {
    if (lesion.empty()) throw Error(ErrorCode::EmptyLesion, "peak score of an empty lesion");
    const Grid& g = tpmap.grid();
    const auto off = sphere_offsets(g.spacing, radius_mm);
    std::vector<std::size_t> order(lesion.begin(), lesion.end());
    std::sort(order.begin(), order.end());
    PeakScore best{-1.0, 0};
    for (std::size_t v : order) {
        const Index3 p = g.unravel(v);
        double sum = 0;
        std::size_t n = 0;
        for (const auto& o : off) {
            const std::int64_t x = p[0] + o[0], y = p[1] + o[1], z = p[2] + o[2];
            if (!g.contains(x, y, z)) continue;
            sum += tpmap.at(x, y, z);
            ++n;
        }
        const double m = sum / static_cast<double>(n);
        if (m > best.score) best = {m, v};
    }
    best.score = std::clamp(best.score, 0.0, 1.0);
    return best;
}

PeakScore peak_score(const Volume3D& tpmap, const Mask3D& lesion, double radius_mm) {
    require_same_grid(tpmap, lesion);
    std::vector<std::size_t> vox;
    for (std::size_t i = 0; i < lesion.size(); ++i)
        if (lesion[i]) vox.push_back(i);
    return peak_score(tpmap, vox, radius_mm);
}

DetectionMap build_detection_map(const Volume3D& tpmap, const OperatingThresholds& th, int connectivity, int max_lesions) {
    Mask3D bin(tpmap.grid(), 0);
    for (std::size_t i = 0; i < tpmap.size(); ++i) bin[i] = tpmap[i] >= th.voxel_youden_t ? 1 : 0;
    const Components comp = connected_components_3d(bin, connectivity);
    const std::size_t n = comp.sizes.size();
    DetectionMap dm{LabelVolume(tpmap.grid(), 0), {}};
    if (n == 0 || max_lesions <= 0) return dm;

    std::vector<std::vector<std::size_t>> voxels(n);
    for (std::size_t i = 0; i < comp.labels.size(); ++i)
        if (comp.labels[i]) voxels[static_cast<std::size_t>(comp.labels[i] - 1)].push_back(i);

    // Only components that can make the cut by size need a peak score.
    std::vector<std::int64_t> by_size(comp.sizes);
    std::sort(by_size.begin(), by_size.end(), std::greater<>());
    const std::int64_t cutoff = by_size[std::min<std::size_t>(n, static_cast<std::size_t>(max_lesions)) - 1];
    std::vector<std::size_t> cand;
    std::vector<PeakScore> peak(n);
    for (std::size_t c = 0; c < n; ++c)
        if (comp.sizes[c] >= cutoff) {
            cand.push_back(c);
            peak[c] = peak_score(tpmap, voxels[c]);
        }
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
        if (comp.sizes[a] != comp.sizes[b]) return comp.sizes[a] > comp.sizes[b];
        if (peak[a].score != peak[b].score) return peak[a].score > peak[b].score;
        return a < b;
    });
    cand.resize(std::min(cand.size(), static_cast<std::size_t>(max_lesions)));
    for (std::size_t k = 0; k < cand.size(); ++k) {
        const std::size_t c = cand[k];
        const int id = static_cast<int>(k) + 1;
        for (std::size_t v : voxels[c]) dm.labels[v] = id;
        dm.lesions.push_back({id, comp.sizes[c], peak[c].score, peak[c].peak_index});
    }
    return dm;
}

double patient_score(const DetectionMap& dm) noexcept {
    double s = 0.0;
    for (const auto& l : dm.lesions) s = std::max(s, l.score);
    return s;
}

Volume3D tpmap_from_predictions(const Grid& grid, std::span<const std::int64_t> voxel_index,
                                std::span<const double> probabilities) {
    if (voxel_index.size() != probabilities.size())
        throw Error(ErrorCode::LengthMismatch, "voxel indices and probabilities differ in length");
    Volume3D v(grid, 0.0);
    for (std::size_t i = 0; i < voxel_index.size(); ++i) {
        if (voxel_index[i] < 0 || static_cast<std::size_t>(voxel_index[i]) >= v.size())
            throw Error(ErrorCode::InvalidArgument, "voxel index outside the grid");
        v[static_cast<std::size_t>(voxel_index[i])] = probabilities[i];
    }
    return v;
}

}  // namespace prorad
