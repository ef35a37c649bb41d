#include "prorad/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace prorad {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    gzFile fp = gzopen(path.string().c_str(), "rb");
    if (fp == nullptr) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes;
    std::array<std::uint8_t, 1 << 16> buf{};
    for (;;) {
        const int n = gzread(fp, buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            gzclose(fp);
            throw Error(ErrorCode::TruncatedFile, "corrupt or truncated gzip stream in " + path.string());
        }
        if (n == 0) break;
        bytes.insert(bytes.end(), buf.begin(), buf.begin() + n);
    }
    gzclose(fp);
    return bytes;
}

class HeaderReader {
public:
    HeaderReader(const std::uint8_t* data, bool swap) : data_(data), swap_(swap) {}

    template <typename T>
    T get(std::size_t offset) const {
        std::array<std::uint8_t, sizeof(T)> raw{};
        std::memcpy(raw.data(), data_ + offset, sizeof(T));
        if (swap_) std::reverse(raw.begin(), raw.end());
        T v;
        std::memcpy(&v, raw.data(), sizeof(T));
        return v;
    }

private:
    const std::uint8_t* data_;
    bool swap_;
};

std::size_t bytes_per_voxel(short datatype) {
    switch (static_cast<NiftiType>(datatype)) {
        case NiftiType::U8: return 1;
        case NiftiType::I16:
        case NiftiType::U16: return 2;
        case NiftiType::I32:
        case NiftiType::F32: return 4;
        case NiftiType::F64: return 8;
    }
    throw Error(ErrorCode::UnsupportedDatatype, "NIfTI datatype " + std::to_string(datatype));
}

template <typename T>
double raw_voxel(const std::uint8_t* p, bool swap) {
    std::array<std::uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), p, sizeof(T));
    if (swap) std::reverse(raw.begin(), raw.end());
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return static_cast<double>(v);
}

// 3x4 voxel-to-world affine.
using Affine = std::array<std::array<double, 4>, 3>;

Affine qform_affine(const HeaderReader& h, const std::array<double, 3>& pixdim, double qfac) {
    const double b = h.get<float>(256);
    const double c = h.get<float>(260);
    const double d = h.get<float>(264);
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    const double r[3][3] = {
        {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
        {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
        {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b},
    };
    const double scale[3] = {pixdim[0], pixdim[1], pixdim[2] * qfac};
    Affine m{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) m[i][j] = r[i][j] * scale[j];
    }
    m[0][3] = h.get<float>(268);
    m[1][3] = h.get<float>(272);
    m[2][3] = h.get<float>(276);
    return m;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    const std::string name = path.string();
    const bool gz = name.size() > 3 && name.compare(name.size() - 3, 3, ".gz") == 0;
    if (gz) {
        gzFile fp = gzopen(name.c_str(), "wb6");
        if (fp == nullptr) throw Error(ErrorCode::IoFailure, "cannot create " + name);
        const int n = gzwrite(fp, bytes.data(), static_cast<unsigned>(bytes.size()));
        const int rc = gzclose(fp);
        if (n != static_cast<int>(bytes.size()) || rc != Z_OK) {
            throw Error(ErrorCode::IoFailure, "short write to " + name);
        }
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + name);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + name);
}

template <typename T>
void put(std::vector<std::uint8_t>& buf, std::size_t offset, T v) {
    std::memcpy(buf.data() + offset, &v, sizeof(T));
}

std::vector<std::uint8_t> make_header(const Grid& g, NiftiType type, const std::string& descrip) {
    static_assert(std::endian::native == std::endian::little, "writer assumes little-endian host");
    std::vector<std::uint8_t> buf(kVoxOffset, 0);
    put<std::int32_t>(buf, 0, static_cast<std::int32_t>(kHeaderSize));
    put<char>(buf, 38, 'r');
    const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(g.dims[0]),
                                          static_cast<std::int16_t>(g.dims[1]),
                                          static_cast<std::int16_t>(g.dims[2]), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) put<std::int16_t>(buf, 40 + 2 * i, dim[i]);
    put<std::int16_t>(buf, 70, static_cast<std::int16_t>(type));
    put<std::int16_t>(buf, 72, static_cast<std::int16_t>(8 * bytes_per_voxel(static_cast<short>(type))));
    const std::array<float, 8> pixdim{1.0f, static_cast<float>(g.spacing[0]), static_cast<float>(g.spacing[1]),
                                      static_cast<float>(g.spacing[2]), 0, 0, 0, 0};
    for (int i = 0; i < 8; ++i) put<float>(buf, 76 + 4 * i, pixdim[i]);
    put<float>(buf, 108, static_cast<float>(kVoxOffset));
    put<float>(buf, 112, 1.0f);
    put<float>(buf, 116, 0.0f);
    put<std::uint8_t>(buf, 123, 2 | 8);  // mm, sec
    const std::size_t n = std::min<std::size_t>(descrip.size(), 79);
    std::memcpy(buf.data() + 148, descrip.data(), n);
    put<std::int16_t>(buf, 252, 1);
    put<std::int16_t>(buf, 254, 1);
    put<float>(buf, 268, static_cast<float>(g.origin[0]));
    put<float>(buf, 272, static_cast<float>(g.origin[1]));
    put<float>(buf, 276, static_cast<float>(g.origin[2]));
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) put<float>(buf, 280 + 16 * r + 4 * c, r == c ? static_cast<float>(g.spacing[r]) : 0.0f);
        put<float>(buf, 280 + 16 * r + 12, static_cast<float>(g.origin[r]));
    }
    std::memcpy(buf.data() + 344, "n+1\0", 4);
    return buf;
}

template <typename Src, typename Conv>
void write_image(const Image<Src>& img, const std::filesystem::path& path, NiftiType type,
                 const std::string& descrip, Conv&& to_bytes) {
    if (img.dims()[0] > 32767 || img.dims()[1] > 32767 || img.dims()[2] > 32767) {
        throw Error(ErrorCode::InvalidArgument, "dims exceed the NIfTI-1 limit");
    }
    auto bytes = make_header(img.grid(), type, descrip);
    const std::size_t bpv = bytes_per_voxel(static_cast<short>(type));
    bytes.resize(kVoxOffset + img.size() * bpv);
    std::uint8_t* p = bytes.data() + kVoxOffset;
    for (std::size_t i = 0; i < img.size(); ++i, p += bpv) to_bytes(img[i], p);
    write_bytes(path, bytes);
}

}  // namespace

Volume3D read_nifti(const std::filesystem::path& path, NiftiInfo* info) {
    const auto bytes = slurp(path);
    if (bytes.size() < kHeaderSize) {
        throw Error(ErrorCode::TruncatedFile, path.string() + " is shorter than a NIfTI-1 header");
    }
    if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
        throw Error(ErrorCode::BadMagic, path.string() + " is not a single-file NIfTI-1 (magic != n+1)");
    }
    std::int32_t sizeof_hdr = 0;
    std::memcpy(&sizeof_hdr, bytes.data(), 4);
    bool swap = false;
    if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
        if (__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr)) != kHeaderSize) {
            throw Error(ErrorCode::BadMagic, path.string() + " has an invalid sizeof_hdr");
        }
        swap = true;
    }
    const HeaderReader h(bytes.data(), swap);

    const auto ndim = h.get<std::int16_t>(40);
    if (ndim < 3 || ndim > 7) {
        throw Error(ErrorCode::BadDimension, path.string() + " has dim[0] = " + std::to_string(ndim));
    }
    Index3 dims{};
    for (int i = 0; i < 3; ++i) dims[i] = h.get<std::int16_t>(42 + 2 * i);
    for (int i = 4; i <= ndim; ++i) {
        if (h.get<std::int16_t>(40 + 2 * i) > 1) {
            throw Error(ErrorCode::BadDimension, path.string() + " is not a 3D volume");
        }
    }
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
        throw Error(ErrorCode::BadDimension, path.string() + " has non-positive dims");
    }

    const short datatype = h.get<std::int16_t>(70);
    const std::size_t bpv = bytes_per_voxel(datatype);
    const double vox_offset = h.get<float>(108);
    const auto offset = static_cast<std::size_t>(std::max(vox_offset, static_cast<double>(kHeaderSize)));
    const std::size_t nvox = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    if (bytes.size() < offset + nvox * bpv) {
        throw Error(ErrorCode::TruncatedFile, path.string() + " holds fewer voxels than its header declares");
    }

    double slope = h.get<float>(112);
    double inter = h.get<float>(116);
    if (slope == 0.0 || !std::isfinite(slope)) {
        slope = 1.0;
        inter = 0.0;
    }
    if (!std::isfinite(inter)) inter = 0.0;

    std::array<double, 3> pixdim{};
    for (int i = 0; i < 3; ++i) pixdim[i] = std::abs(h.get<float>(80 + 4 * i));
    for (auto& p : pixdim) {
        if (!(p > 0.0)) p = 1.0;
    }

    Affine m{};
    const auto sform_code = h.get<std::int16_t>(254);
    const auto qform_code = h.get<std::int16_t>(252);
    if (sform_code > 0) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) m[r][c] = h.get<float>(280 + 16 * r + 4 * c);
    } else if (qform_code > 0) {
        const double qfac = h.get<float>(76) < 0 ? -1.0 : 1.0;
        m = qform_affine(h, pixdim, qfac);
    } else {
        for (int r = 0; r < 3; ++r) m[r][r] = pixdim[r];
    }

    Grid grid;
    grid.dims = dims;
    std::array<bool, 3> flip{};
    for (int c = 0; c < 3; ++c) {
        const double diag = m[c][c];
        double off = 0.0;
        for (int r = 0; r < 3; ++r)
            if (r != c) off = std::max(off, std::abs(m[r][c]));
        if (!(std::abs(diag) > 0.0) || off > 1e-4 * std::abs(diag)) {
            throw Error(ErrorCode::ObliqueOrientation,
                        path.string() + " is not axis-aligned; only diagonal voxel-to-world transforms are supported");
        }
        grid.spacing[c] = std::abs(diag);
        flip[c] = diag < 0.0;
        grid.origin[c] = m[c][3] + (flip[c] ? diag * static_cast<double>(dims[c] - 1) : 0.0);
    }

    std::vector<double> values(nvox);
    const std::uint8_t* data = bytes.data() + offset;
    for (std::int64_t z = 0; z < dims[2]; ++z) {
        for (std::int64_t y = 0; y < dims[1]; ++y) {
            for (std::int64_t x = 0; x < dims[0]; ++x) {
                const std::size_t src = static_cast<std::size_t>(x + dims[0] * (y + dims[1] * z));
                const std::int64_t dx = flip[0] ? dims[0] - 1 - x : x;
                const std::int64_t dy = flip[1] ? dims[1] - 1 - y : y;
                const std::int64_t dz = flip[2] ? dims[2] - 1 - z : z;
                const std::uint8_t* p = data + src * bpv;
                double raw = 0.0;
                switch (static_cast<NiftiType>(datatype)) {
                    case NiftiType::U8: raw = *p; break;
                    case NiftiType::I16: raw = raw_voxel<std::int16_t>(p, swap); break;
                    case NiftiType::U16: raw = raw_voxel<std::uint16_t>(p, swap); break;
                    case NiftiType::I32: raw = raw_voxel<std::int32_t>(p, swap); break;
                    case NiftiType::F32: raw = raw_voxel<float>(p, swap); break;
                    case NiftiType::F64: raw = raw_voxel<double>(p, swap); break;
                }
                double v = raw * slope + inter;
                if (!std::isfinite(v)) v = 0.0;
                values[static_cast<std::size_t>(dx + dims[0] * (dy + dims[1] * dz))] = v;
            }
        }
    }

    if (info != nullptr) {
        info->datatype = static_cast<NiftiType>(datatype);
        info->scl_slope = slope;
        info->scl_inter = inter;
        const char* d = reinterpret_cast<const char*>(bytes.data() + 148);
        info->descrip.assign(d, strnlen(d, 80));
    }
    return Volume3D(grid, std::move(values));
}

Mask3D read_nifti_mask(const std::filesystem::path& path) {
    const Volume3D vol = read_nifti(path);
    Mask3D mask(vol.grid());
    for (std::size_t i = 0; i < vol.size(); ++i) mask[i] = vol[i] != 0.0 ? 1 : 0;
    return mask;
}

LabelVolume read_nifti_labels(const std::filesystem::path& path) {
    const Volume3D vol = read_nifti(path);
    LabelVolume labels(vol.grid());
    for (std::size_t i = 0; i < vol.size(); ++i) {
        const double v = vol[i];
        if (v < 0.0 || v != std::floor(v) || v > 2147483647.0) {
            throw Error(ErrorCode::UnsupportedDatatype, path.string() + " holds non-integral label values");
        }
        labels[i] = static_cast<std::int32_t>(v);
    }
    return labels;
}

void write_nifti(const Volume3D& vol, const std::filesystem::path& path, NiftiType type,
                 const std::string& descrip) {
    write_image(vol, path, type, descrip, [type](double v, std::uint8_t* p) {
        switch (type) {
            case NiftiType::U8: *p = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); break;
            case NiftiType::I16: {
                const auto s = static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
                std::memcpy(p, &s, 2);
                break;
            }
            case NiftiType::U16: {
                const auto s = static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L));
                std::memcpy(p, &s, 2);
                break;
            }
            case NiftiType::I32: {
                const auto s = static_cast<std::int32_t>(std::llround(v));
                std::memcpy(p, &s, 4);
                break;
            }
            case NiftiType::F32: {
                const auto f = static_cast<float>(v);
                std::memcpy(p, &f, 4);
                break;
            }
            case NiftiType::F64: std::memcpy(p, &v, 8); break;
        }
    });
}

void write_nifti(const Mask3D& mask, const std::filesystem::path& path, const std::string& descrip) {
    write_image(mask, path, NiftiType::U8, descrip,
                [](std::uint8_t v, std::uint8_t* p) { *p = v != 0 ? 1 : 0; });
}

void write_nifti(const LabelVolume& labels, const std::filesystem::path& path, const std::string& descrip) {
    write_image(labels, path, NiftiType::U16, descrip, [](std::int32_t v, std::uint8_t* p) {
        if (v < 0 || v > 65535) throw Error(ErrorCode::InvalidArgument, "label value does not fit u16");
        const auto s = static_cast<std::uint16_t>(v);
        std::memcpy(p, &s, 2);
    });
}

}  // namespace prorad
