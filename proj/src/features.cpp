#include "prorad/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "prorad/parallel.hpp"

namespace prorad {

namespace fs = std::filesystem;

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        auto add = [&](const char* prefix, const auto& list) {
            for (std::string_view s : list) n.push_back(std::string(prefix) + std::string(s));
        };
        add("t2w_firstorder_", texture::kFirstOrderNames);
        add("t2w_glcm_", texture::kGlcmNames);
        add("t2w_glrlm_", texture::kGlrlmNames);
        add("t2w_glszm_", texture::kGlszmNames);
        add("t2w_ngtdm_", texture::kNgtdmNames);
        add("t2w_gldm_", texture::kGldmNames);
        add("adc_firstorder_", texture::kFirstOrderNames);
        add("hbv_firstorder_", texture::kFirstOrderNames);
        for (const char* a : {"anat_RDB", "anat_Xpos", "anat_Ypos", "anat_Zpos", "anat_PZL"}) n.emplace_back(a);
        return n;
    }();
    return names;
}

void FeatureSpec::validate() const {
    if (!(bin_width > 0.0)) throw Error(ErrorCode::Config, "bin_width must be positive");
    if (kernel_radius < 1) throw Error(ErrorCode::Config, "kernel_radius must be >= 1");
    if (!(intensity_scale > 0.0)) throw Error(ErrorCode::Config, "intensity_scale must be positive");
    if (!(pzl_sigma_mm > 0.0)) throw Error(ErrorCode::Config, "pzl_sigma_mm must be positive");
}

Volume3D gaussian_smooth(const Volume3D& v, double sigma_mm) {
    if (!(sigma_mm > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
    Volume3D cur = v;
    const Grid& g = v.grid();
    for (int axis = 0; axis < 3; ++axis) {
        const double sigma = sigma_mm / g.spacing[static_cast<std::size_t>(axis)];
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
        double ks = 0;
        for (int i = -radius; i <= radius; ++i) {
            k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
            ks += k[static_cast<std::size_t>(i + radius)];
        }
        for (auto& x : k) x /= ks;
        Volume3D next(g);
        const std::int64_t n = g.dims[static_cast<std::size_t>(axis)];
        for (std::int64_t z = 0; z < g.dims[2]; ++z)
            for (std::int64_t y = 0; y < g.dims[1]; ++y)
                for (std::int64_t x = 0; x < g.dims[0]; ++x) {
                    Index3 p{x, y, z};
                    const std::int64_t c = p[static_cast<std::size_t>(axis)];
                    double acc = 0;
                    for (int i = -radius; i <= radius; ++i) {
                        const std::int64_t q = c + i;
                        if (q < 0 || q >= n) continue;
                        p[static_cast<std::size_t>(axis)] = q;
                        acc += k[static_cast<std::size_t>(i + radius)] * cur.at(p[0], p[1], p[2]);
                    }
                    next.at(x, y, z) = acc;
                }
        cur = std::move(next);
    }
    return cur;
}

AnatomicalMaps anatomical_maps(const Mask3D& prostate, const Mask3D& pz, const Volume3D* pz_likelihood,
                               double pzl_sigma_mm) {
    require_same_grid(prostate, pz);
    if (count_nonzero(prostate) == 0) throw Error(ErrorCode::EmptyMask, "prostate mask is empty");
    const Grid& g = prostate.grid();
    AnatomicalMaps m{distance_to_boundary(prostate), Volume3D(g), Volume3D(g), Volume3D(g), Volume3D(g)};
    const auto vals = m.rdb.values();
    const double dmax = *std::max_element(vals.begin(), vals.end());
    for (auto& d : m.rdb.values()) d /= dmax;

    const BoundingBox box = mask_bbox(prostate);
    Volume3D* pos[3] = {&m.xpos, &m.ypos, &m.zpos};
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
        if (!prostate[i]) continue;
        const Index3 p = g.unravel(i);
        for (std::size_t a = 0; a < 3; ++a) {
            const auto extent = box.hi[a] - box.lo[a];
            (*pos[a])[i] = extent > 0 ? static_cast<double>(p[a] - box.lo[a]) / static_cast<double>(extent) : 0.0;
        }
    }

    if (pz_likelihood) {
        require_same_grid(prostate, *pz_likelihood);
        m.pzl = *pz_likelihood;
    } else {
        Volume3D pzv(g);
        for (std::size_t i = 0; i < g.voxel_count(); ++i) pzv[i] = pz[i] ? 1.0 : 0.0;
        m.pzl = gaussian_smooth(pzv, pzl_sigma_mm);
        for (auto& x : m.pzl.values()) x = std::clamp(x, 0.0, 1.0);
    }
    return m;
}

std::vector<std::int8_t> voxel_labels(const PreparedCase& c, std::span<const std::int64_t> voxels) {
    std::vector<std::int8_t> out(voxels.size(), kLabelUnknown);
    if (!c.gt_labels) return out;
    std::map<int, int> gg;
    for (const auto& l : c.gt_lesions) gg[l.label] = l.grade_group;
    for (std::size_t r = 0; r < voxels.size(); ++r) {
        const int lab = (*c.gt_labels)[static_cast<std::size_t>(voxels[r])];
        const auto it = gg.find(lab);
        out[r] = (lab != 0 && it != gg.end() && it->second >= 2) ? 1 : 0;
    }
    return out;
}

FeatureMatrix extract_case(const PreparedCase& c, const FeatureSpec& spec, unsigned threads) {
    spec.validate();
    require_same_grid(c.t2w_norm, c.prostate);
    require_same_grid(c.t2w_norm, c.adc_norm);
    require_same_grid(c.t2w_norm, c.hbv_norm);
    const Grid& g = c.t2w_norm.grid();
    const AnatomicalMaps anat =
        anatomical_maps(c.prostate, c.pz, c.pz_likelihood ? &*c.pz_likelihood : nullptr, spec.pzl_sigma_mm);

    FeatureMatrix m;
    m.case_id = c.case_id;
    for (std::size_t i = 0; i < g.voxel_count(); ++i)
        if (c.prostate[i]) m.voxel_index.push_back(static_cast<std::int64_t>(i));
    m.label = voxel_labels(c, m.voxel_index);
    m.values.assign(m.rows() * kFeatureCount, 0.0);

    const double s = spec.intensity_scale;
    auto scaled_min = [&](const Volume3D& v) -> std::optional<double> {
        if (spec.discretization == Discretization::PerWindow) return std::nullopt;
        double lo = INFINITY;
        for (double x : v.values()) lo = std::min(lo, x * s);
        return lo;
    };
    const std::optional<double> t2w_anchor = scaled_min(c.t2w_norm);
    const std::optional<double> adc_anchor = scaled_min(c.adc_norm);
    const std::optional<double> hbv_anchor = scaled_min(c.hbv_norm);
    const double voxel_volume = g.voxel_volume();
    const int r = spec.kernel_radius;

    parallel_for(m.rows(), threads, [&](std::size_t row) {
        thread_local std::vector<double> buf;
        const auto idx = static_cast<std::size_t>(m.voxel_index[row]);
        const Index3 p = g.unravel(idx);
        const std::int64_t x0 = std::max<std::int64_t>(0, p[0] - r), x1 = std::min<std::int64_t>(g.dims[0] - 1, p[0] + r);
        const std::int64_t y0 = std::max<std::int64_t>(0, p[1] - r), y1 = std::min<std::int64_t>(g.dims[1] - 1, p[1] + r);
        const int w = static_cast<int>(x1 - x0 + 1), h = static_cast<int>(y1 - y0 + 1);
        double* out = m.values.data() + row * kFeatureCount;
        auto gather = [&](const Volume3D& v) {
            buf.clear();
            for (std::int64_t y = y0; y <= y1; ++y)
                for (std::int64_t x = x0; x <= x1; ++x) buf.push_back(v.at(x, y, p[2]) * s);
        };
        gather(c.t2w_norm);
        texture::t2w_features({buf, w, h}, spec.bin_width, voxel_volume, t2w_anchor,
                              std::span<double, texture::kT2wCount>(out, texture::kT2wCount));
        gather(c.adc_norm);
        const auto adc = texture::first_order(buf, spec.bin_width, voxel_volume, adc_anchor);
        std::copy(adc.begin(), adc.end(), out + kAdcOffset);
        gather(c.hbv_norm);
        const auto hbv = texture::first_order(buf, spec.bin_width, voxel_volume, hbv_anchor);
        std::copy(hbv.begin(), hbv.end(), out + kHbvOffset);
        out[kAnatOffset + 0] = anat.rdb[idx];
        out[kAnatOffset + 1] = anat.xpos[idx];
        out[kAnatOffset + 2] = anat.ypos[idx];
        out[kAnatOffset + 3] = anat.zpos[idx];
        out[kAnatOffset + 4] = anat.pzl[idx];
    });
    return m;
}

void write_feature_csv(const FeatureMatrix& m, const fs::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    for (const auto& n : feature_names()) std::fprintf(f, "%s,", n.c_str());
    std::fprintf(f, "case_id,voxel_index,label\n");
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (double v : m.row(r)) std::fprintf(f, "%.17g,", v);
        std::fprintf(f, "%s,%lld,%d\n", m.case_id.c_str(), static_cast<long long>(m.voxel_index[r]), m.label[r]);
    }
    if (std::fclose(f) != 0) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

// Binary container: "PRFM", u32 version, u32 columns, u64 rows, then length-prefixed
// case id, config hash and column names, then voxel indices (i64), labels (i8) and the
// row-major f64 values. Little-endian.
static_assert(std::endian::native == std::endian::little, "feature container assumes a little-endian host");

namespace {

template <typename T>
void put(std::ofstream& o, const T& v) {
    o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
void put_string(std::ofstream& o, const std::string& s) {
    put<std::uint32_t>(o, static_cast<std::uint32_t>(s.size()));
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}
template <typename T>
T get(std::ifstream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(ErrorCode::TruncatedFile, "feature container is truncated");
    return v;
}
std::string get_string(std::ifstream& in) {
    const auto n = get<std::uint32_t>(in);
    if (n > (1u << 20)) throw Error(ErrorCode::Schema, "feature container string too long");
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw Error(ErrorCode::TruncatedFile, "feature container is truncated");
    return s;
}
template <typename T>
void get_array(std::ifstream& in, std::vector<T>& v, std::size_t n) {
    v.resize(n);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T))))
        throw Error(ErrorCode::TruncatedFile, "feature container is truncated");
}

}  // namespace

void write_feature_binary(const FeatureMatrix& m, const fs::path& path) {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    o.write("PRFM", 4);
    put<std::uint32_t>(o, kFeatureFormatVersion);
    put<std::uint32_t>(o, kFeatureCount);
    put<std::uint64_t>(o, m.rows());
    put_string(o, m.case_id);
    put_string(o, m.config_hash);
    for (const auto& n : feature_names()) put_string(o, n);
    o.write(reinterpret_cast<const char*>(m.voxel_index.data()), static_cast<std::streamsize>(m.rows() * sizeof(std::int64_t)));
    o.write(reinterpret_cast<const char*>(m.label.data()), static_cast<std::streamsize>(m.rows()));
    o.write(reinterpret_cast<const char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (!o) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

FeatureMatrix read_feature_binary(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PRFM", 4) != 0) throw Error(ErrorCode::BadMagic, path.string() + " is not a feature container");
    if (get<std::uint32_t>(in) != kFeatureFormatVersion) throw Error(ErrorCode::Schema, "unsupported feature container version");
    if (get<std::uint32_t>(in) != kFeatureCount) throw Error(ErrorCode::WidthMismatch, "feature container column count");
    const auto rows = static_cast<std::size_t>(get<std::uint64_t>(in));
    FeatureMatrix m;
    m.case_id = get_string(in);
    m.config_hash = get_string(in);
    for (const auto& n : feature_names())
        if (get_string(in) != n) throw Error(ErrorCode::Schema, "feature container column names differ from the canonical list");
    get_array(in, m.voxel_index, rows);
    get_array(in, m.label, rows);
    get_array(in, m.values, rows * kFeatureCount);
    return m;
}

}  // namespace prorad
