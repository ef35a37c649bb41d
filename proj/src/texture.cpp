#include "prorad/texture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prorad/error.hpp"

namespace prorad::texture {

const std::array<std::string_view, kFirstOrderCount> kFirstOrderNames{
    "Energy", "TotalEnergy", "Entropy", "Minimum", "10Percentile", "90Percentile", "Maximum",
    "Mean", "Median", "InterquartileRange", "Range", "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation", "RootMeanSquared", "StandardDeviation", "Skewness", "Kurtosis",
    "Variance", "Uniformity"};

const std::array<std::string_view, kGlcmCount> kGlcmNames{
    "Autocorrelation", "JointAverage", "ClusterProminence", "ClusterShade", "ClusterTendency",
    "Contrast", "Correlation", "DifferenceAverage", "DifferenceEntropy", "DifferenceVariance",
    "JointEnergy", "JointEntropy", "Imc1", "Imc2", "Idm", "Idmn", "Id", "Idn", "InverseVariance",
    "MaximumProbability", "SumAverage", "SumEntropy", "SumSquares", "MCC"};

const std::array<std::string_view, kGlrlmCount> kGlrlmNames{
    "ShortRunEmphasis", "LongRunEmphasis", "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity", "RunLengthNonUniformityNormalized", "RunPercentage", "GrayLevelVariance",
    "RunVariance", "RunEntropy", "LowGrayLevelRunEmphasis", "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis", "ShortRunHighGrayLevelEmphasis", "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis"};

const std::array<std::string_view, kGlszmCount> kGlszmNames{
    "SmallAreaEmphasis", "LargeAreaEmphasis", "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity", "SizeZoneNonUniformityNormalized", "ZonePercentage", "GrayLevelVariance",
    "ZoneVariance", "ZoneEntropy", "LowGrayLevelZoneEmphasis", "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis", "SmallAreaHighGrayLevelEmphasis", "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis"};

const std::array<std::string_view, kNgtdmCount> kNgtdmNames{"Coarseness", "Contrast", "Busyness",
                                                            "Complexity", "Strength"};

const std::array<std::string_view, kGldmCount> kGldmNames{
    "SmallDependenceEmphasis", "LargeDependenceEmphasis", "GrayLevelNonUniformity",
    "DependenceNonUniformity", "DependenceNonUniformityNormalized", "GrayLevelVariance",
    "DependenceVariance", "DependenceEntropy", "LowGrayLevelEmphasis", "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis", "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis", "LargeDependenceHighGrayLevelEmphasis"};

namespace {

// Dense re-indexing of the gray levels present in a window. Matrices are built over the
// present levels only; feature formulas weight by the true level value.
struct Compact {
    std::vector<int> index;     // per pixel, into level
    std::vector<double> level;  // ascending gray levels present
};

struct Scratch {
    Compact compact;
    std::vector<int> sorted;
    std::vector<double> matrix;
    std::vector<double> px;
    std::vector<double> py;
    std::vector<std::pair<double, double>> dist;
    std::vector<double> sym;
    std::vector<int> stack;
    std::vector<int> zone;
    std::vector<double> values;
};

Scratch& scratch() {
    thread_local Scratch s;
    return s;
}

void build_compact(const QuantizedWindow& q, Compact& c, std::vector<int>& sorted) {
    sorted.assign(q.levels.begin(), q.levels.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    c.level.assign(sorted.begin(), sorted.end());
    c.index.resize(q.levels.size());
    for (std::size_t i = 0; i < q.levels.size(); ++i) {
        c.index[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), q.levels[i]) - sorted.begin());
    }
}

inline double xlog2x(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

// Sorts (key, mass) pairs by key and merges equal keys.
void merge_distribution(std::vector<std::pair<double, double>>& d) {
    std::sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t out = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (out > 0 && d[out - 1].first == d[i].first) {
            d[out - 1].second += d[i].second;
        } else {
            d[out++] = d[i];
        }
    }
    d.resize(out);
}

// Eigenvalues of a symmetric n x n matrix (row-major, destroyed) by cyclic Jacobi rotations.
void symmetric_eigenvalues(std::vector<double>& a, int n, std::vector<double>& eig) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int r = p + 1; r < n; ++r) off += a[p * n + r] * a[p * n + r];
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int r = p + 1; r < n; ++r) {
                const double apr = a[p * n + r];
                if (std::abs(apr) < 1e-300) continue;
                const double theta = (a[r * n + r] - a[p * n + p]) / (2.0 * apr);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akr = a[k * n + r];
                    a[k * n + p] = c * akp - s * akr;
                    a[k * n + r] = s * akp + c * akr;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double ark = a[r * n + k];
                    a[p * n + k] = c * apk - s * ark;
                    a[r * n + k] = s * apk + c * ark;
                }
            }
        }
    }
    eig.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a[i * n + i];
}

std::optional<GlcmFeatures> glcm_direction(const QuantizedWindow& q, const Compact& c, int direction,
                                           Scratch& s) {
    const int n = static_cast<int>(c.level.size());
    const int dx = kDirections[static_cast<std::size_t>(direction)][0];
    const int dy = kDirections[static_cast<std::size_t>(direction)][1];
    auto& m = s.matrix;
    m.assign(static_cast<std::size_t>(n * n), 0.0);
    long pairs = 0;
    for (int y = 0; y < q.height; ++y) {
        const int ny = y + dy;
        if (ny < 0 || ny >= q.height) continue;
        for (int x = 0; x < q.width; ++x) {
            const int nx = x + dx;
            if (nx < 0 || nx >= q.width) continue;
            const int a = c.index[static_cast<std::size_t>(y * q.width + x)];
            const int b = c.index[static_cast<std::size_t>(ny * q.width + nx)];
            m[static_cast<std::size_t>(a * n + b)] += 1.0;
            m[static_cast<std::size_t>(b * n + a)] += 1.0;
            ++pairs;
        }
    }
    if (pairs == 0) return std::nullopt;
    const double total = 2.0 * static_cast<double>(pairs);

    auto& px = s.px;
    auto& py = s.py;
    px.assign(static_cast<std::size_t>(n), 0.0);
    py.assign(static_cast<std::size_t>(n), 0.0);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            double& p = m[static_cast<std::size_t>(a * n + b)];
            p /= total;
            px[static_cast<std::size_t>(a)] += p;
            py[static_cast<std::size_t>(b)] += p;
        }
    }
    double ux = 0.0, uy = 0.0;
    for (int a = 0; a < n; ++a) {
        ux += c.level[static_cast<std::size_t>(a)] * px[static_cast<std::size_t>(a)];
        uy += c.level[static_cast<std::size_t>(a)] * py[static_cast<std::size_t>(a)];
    }
    double varx = 0.0, vary = 0.0, hx = 0.0, hy = 0.0;
    for (int a = 0; a < n; ++a) {
        const double i = c.level[static_cast<std::size_t>(a)];
        varx += (i - ux) * (i - ux) * px[static_cast<std::size_t>(a)];
        vary += (i - uy) * (i - uy) * py[static_cast<std::size_t>(a)];
        hx -= xlog2x(px[static_cast<std::size_t>(a)]);
        hy -= xlog2x(py[static_cast<std::size_t>(a)]);
    }

    double autocorr = 0, cp = 0, cs = 0, ct = 0, contrast = 0, energy = 0, hxy = 0, hxy1 = 0;
    double maxp = 0, sum_sq = 0;
    auto& diff = s.dist;
    diff.clear();
    thread_local std::vector<std::pair<double, double>> sums;
    sums.clear();
    for (int a = 0; a < n; ++a) {
        const double i = c.level[static_cast<std::size_t>(a)];
        for (int b = 0; b < n; ++b) {
            const double p = m[static_cast<std::size_t>(a * n + b)];
            if (p <= 0.0) continue;
            const double j = c.level[static_cast<std::size_t>(b)];
            autocorr += p * i * j;
            const double t = i + j - ux - uy;
            const double t2 = t * t;
            ct += t2 * p;
            cs += t2 * t * p;
            cp += t2 * t2 * p;
            contrast += (i - j) * (i - j) * p;
            energy += p * p;
            hxy -= p * std::log2(p);
            hxy1 -= p * std::log2(px[static_cast<std::size_t>(a)] * py[static_cast<std::size_t>(b)]);
            maxp = std::max(maxp, p);
            sum_sq += (i - ux) * (i - ux) * p;
            diff.emplace_back(std::abs(i - j), p);
            sums.emplace_back(i + j, p);
        }
    }
    merge_distribution(diff);
    merge_distribution(sums);

    const double ng = static_cast<double>(q.ng);
    double diff_avg = 0, diff_ent = 0, idm = 0, idmn = 0, id = 0, idn = 0, inv_var = 0;
    for (const auto& [k, p] : diff) {
        diff_avg += k * p;
        diff_ent -= xlog2x(p);
        idm += p / (1.0 + k * k);
        idmn += p / (1.0 + (k * k) / (ng * ng));
        id += p / (1.0 + k);
        idn += p / (1.0 + k / ng);
        if (k > 0) inv_var += p / (k * k);
    }
    double diff_var = 0;
    for (const auto& [k, p] : diff) diff_var += (k - diff_avg) * (k - diff_avg) * p;
    double sum_avg = 0, sum_ent = 0;
    for (const auto& [k, p] : sums) {
        sum_avg += k * p;
        sum_ent -= xlog2x(p);
    }

    const double sigma = std::sqrt(varx) * std::sqrt(vary);
    const double correlation = sigma > 0.0 ? (autocorr - ux * uy) / sigma : 0.0;
    const double hmax = std::max(hx, hy);
    const double imc1 = hmax > 0.0 ? (hxy - hxy1) / hmax : 0.0;
    const double hxy2 = hx + hy;
    const double imc2 = hxy2 > hxy ? std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - hxy)))) : 0.0;

    // MCC: Q = D^-1 P D^-1 P^T is similar to S^2 with S = D^-1/2 P D^-1/2, so the
    // square root of Q's second-largest eigenvalue is the second-largest |eig(S)|.
    thread_local std::vector<int> present;
    present.clear();
    for (int a = 0; a < n; ++a)
        if (px[static_cast<std::size_t>(a)] > 0.0) present.push_back(a);
    double mcc = 1.0;
    const int np = static_cast<int>(present.size());
    if (np >= 2) {
        auto& sym = s.sym;
        sym.assign(static_cast<std::size_t>(np * np), 0.0);
        for (int u = 0; u < np; ++u) {
            const int a = present[static_cast<std::size_t>(u)];
            for (int v = 0; v < np; ++v) {
                const int b = present[static_cast<std::size_t>(v)];
                sym[static_cast<std::size_t>(u * np + v)] =
                    m[static_cast<std::size_t>(a * n + b)] /
                    std::sqrt(px[static_cast<std::size_t>(a)] * px[static_cast<std::size_t>(b)]);
            }
        }
        thread_local std::vector<double> eig;
        symmetric_eigenvalues(sym, np, eig);
        for (auto& e : eig) e = std::abs(e);
        std::sort(eig.begin(), eig.end(), std::greater<>());
        mcc = eig[1];
    }

    return GlcmFeatures{autocorr, ux,     cp,       cs,   ct,       contrast, correlation, diff_avg,
                        diff_ent, diff_var, energy, hxy,  imc1,     imc2,     idm,         idmn,
                        id,       idn,    inv_var,  maxp, sum_avg,  sum_ent,  sum_sq,      mcc};
}

// Shared statistics over a (gray level, size) count matrix for GLRLM/GLSZM/GLDM, where
// size is run length, zone size or dependence count.
struct SizeMatrixStats {
    double small = 0, large = 0, gln = 0, glnn = 0, szn = 0, sznn = 0, glv = 0, szv = 0, entropy = 0;
    double low = 0, high = 0, small_low = 0, small_high = 0, large_low = 0, large_high = 0;
    double total = 0;
};

SizeMatrixStats size_matrix_stats(const std::vector<double>& counts, const std::vector<double>& level,
                                  int max_size) {
    const int n = static_cast<int>(level.size());
    const int cols = max_size + 1;
    SizeMatrixStats st;
    for (double v : counts) st.total += v;
    if (st.total <= 0.0) return st;
    const double nr = st.total;
    thread_local std::vector<double> per_size;
    per_size.assign(static_cast<std::size_t>(cols), 0.0);
    double mu_i = 0, mu_j = 0;
    for (int a = 0; a < n; ++a) {
        const double i = level[static_cast<std::size_t>(a)];
        const double i2 = i * i;
        double per_level = 0;
        for (int j = 1; j < cols; ++j) {
            const double cnt = counts[static_cast<std::size_t>(a * cols + j)];
            if (cnt == 0.0) continue;
            const double jj = static_cast<double>(j) * static_cast<double>(j);
            const double p = cnt / nr;
            per_level += cnt;
            per_size[static_cast<std::size_t>(j)] += cnt;
            st.small += p / jj;
            st.large += p * jj;
            st.low += p / i2;
            st.high += p * i2;
            st.small_low += p / (i2 * jj);
            st.small_high += p * i2 / jj;
            st.large_low += p * jj / i2;
            st.large_high += p * i2 * jj;
            st.entropy -= p * std::log2(p);
            mu_i += p * i;
            mu_j += p * static_cast<double>(j);
        }
        st.gln += per_level * per_level;
    }
    for (int j = 1; j < cols; ++j) st.szn += per_size[static_cast<std::size_t>(j)] * per_size[static_cast<std::size_t>(j)];
    for (int a = 0; a < n; ++a) {
        const double i = level[static_cast<std::size_t>(a)];
        for (int j = 1; j < cols; ++j) {
            const double cnt = counts[static_cast<std::size_t>(a * cols + j)];
            if (cnt == 0.0) continue;
            const double p = cnt / nr;
            st.glv += p * (i - mu_i) * (i - mu_i);
            st.szv += p * (static_cast<double>(j) - mu_j) * (static_cast<double>(j) - mu_j);
        }
    }
    st.glnn = st.gln / (nr * nr);
    st.gln /= nr;
    st.sznn = st.szn / (nr * nr);
    st.szn /= nr;
    return st;
}

GlrlmFeatures glrlm_direction(const QuantizedWindow& q, const Compact& c, int direction, Scratch& s) {
    const int n = static_cast<int>(c.level.size());
    const int dx = kDirections[static_cast<std::size_t>(direction)][0];
    const int dy = kDirections[static_cast<std::size_t>(direction)][1];
    const int max_len = std::max(q.width, q.height);
    const int cols = max_len + 1;
    auto& counts = s.matrix;
    counts.assign(static_cast<std::size_t>(n * cols), 0.0);
    auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < q.width && y < q.height; };
    for (int y = 0; y < q.height; ++y) {
        for (int x = 0; x < q.width; ++x) {
            const int a = c.index[static_cast<std::size_t>(y * q.width + x)];
            const int pxp = x - dx, pyp = y - dy;
            if (inside(pxp, pyp) && c.index[static_cast<std::size_t>(pyp * q.width + pxp)] == a) continue;
            int len = 1;
            int cx = x + dx, cy = y + dy;
            while (inside(cx, cy) && c.index[static_cast<std::size_t>(cy * q.width + cx)] == a) {
                ++len;
                cx += dx;
                cy += dy;
            }
            counts[static_cast<std::size_t>(a * cols + len)] += 1.0;
        }
    }
    const SizeMatrixStats st = size_matrix_stats(counts, c.level, max_len);
    const double np = static_cast<double>(q.width * q.height);
    return GlrlmFeatures{st.small, st.large, st.gln, st.glnn, st.szn, st.sznn, st.total / np, st.glv,
                         st.szv, st.entropy, st.low, st.high, st.small_low, st.small_high, st.large_low,
                         st.large_high};
}

FirstOrder first_order_impl(std::span<const double> values, const std::vector<int>& levels,
                            double voxel_volume, std::vector<double>& sorted) {
    const double n = static_cast<double>(values.size());
    sorted.assign(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    auto percentile = [&](double pct) {
        const double pos = pct / 100.0 * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(lo);
        if (lo + 1 >= sorted.size()) return sorted.back();
        return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
    };
    double sum = 0, sum_sq = 0;
    for (double v : values) {
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n;
    double m2 = 0, m3 = 0, m4 = 0, mad = 0;
    for (double v : values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        mad += std::abs(d);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;
    const double p10 = percentile(10), p25 = percentile(25), p50 = percentile(50), p75 = percentile(75),
                 p90 = percentile(90);
    double robust_sum = 0, robust_n = 0;
    for (double v : values) {
        if (v >= p10 && v <= p90) {
            robust_sum += v;
            robust_n += 1;
        }
    }
    const double robust_mean = robust_sum / robust_n;
    double rmad = 0;
    for (double v : values)
        if (v >= p10 && v <= p90) rmad += std::abs(v - robust_mean);
    rmad /= robust_n;

    // Bin histogram.
    thread_local std::vector<int> hist_levels;
    hist_levels.assign(levels.begin(), levels.end());
    std::sort(hist_levels.begin(), hist_levels.end());
    double entropy = 0, uniformity = 0;
    for (std::size_t i = 0; i < hist_levels.size();) {
        std::size_t j = i;
        while (j < hist_levels.size() && hist_levels[j] == hist_levels[i]) ++j;
        const double p = static_cast<double>(j - i) / n;
        entropy -= p * std::log2(p);
        uniformity += p * p;
        i = j;
    }

    const double skew = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    const double kurt = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;
    return FirstOrder{sum_sq,
                      voxel_volume * sum_sq,
                      entropy,
                      sorted.front(),
                      p10,
                      p90,
                      sorted.back(),
                      mean,
                      p50,
                      p75 - p25,
                      sorted.back() - sorted.front(),
                      mad,
                      rmad,
                      std::sqrt(sum_sq / n),
                      std::sqrt(m2),
                      skew,
                      kurt,
                      m2,
                      uniformity};
}

void quantize_into(std::span<const double> values, double bin_width, std::optional<double> anchor,
                   std::vector<int>& levels, int& ng) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantize: empty window");
    if (!(bin_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "quantize: bin width must be positive");
    const double lo = anchor ? *anchor : *std::min_element(values.begin(), values.end());
    levels.resize(values.size());
    ng = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int g = static_cast<int>(std::floor((values[i] - lo) / bin_width)) + 1;
        levels[i] = std::max(g, 1);
        ng = std::max(ng, levels[i]);
    }
}

GlszmFeatures glszm_impl(const QuantizedWindow& q, const Compact& c, Scratch& s) {
    const int n = static_cast<int>(c.level.size());
    const int npix = q.width * q.height;
    const int cols = npix + 1;
    auto& counts = s.matrix;
    counts.assign(static_cast<std::size_t>(n * cols), 0.0);
    auto& zone = s.zone;
    zone.assign(static_cast<std::size_t>(npix), -1);
    auto& stack = s.stack;
    int zones = 0;
    for (int start = 0; start < npix; ++start) {
        if (zone[static_cast<std::size_t>(start)] >= 0) continue;
        const int a = c.index[static_cast<std::size_t>(start)];
        int size = 0;
        stack.clear();
        stack.push_back(start);
        zone[static_cast<std::size_t>(start)] = zones;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            ++size;
            const int vx = v % q.width, vy = v / q.width;
            for (int oy = -1; oy <= 1; ++oy) {
                for (int ox = -1; ox <= 1; ++ox) {
                    const int nx = vx + ox, ny = vy + oy;
                    if ((ox == 0 && oy == 0) || nx < 0 || ny < 0 || nx >= q.width || ny >= q.height) continue;
                    const int u = ny * q.width + nx;
                    if (zone[static_cast<std::size_t>(u)] >= 0 || c.index[static_cast<std::size_t>(u)] != a) continue;
                    zone[static_cast<std::size_t>(u)] = zones;
                    stack.push_back(u);
                }
            }
        }
        counts[static_cast<std::size_t>(a * cols + size)] += 1.0;
        ++zones;
    }
    const SizeMatrixStats st = size_matrix_stats(counts, c.level, npix);
    return GlszmFeatures{st.small, st.large, st.gln, st.glnn, st.szn, st.sznn,
                         st.total / static_cast<double>(npix), st.glv, st.szv, st.entropy, st.low, st.high,
                         st.small_low, st.small_high, st.large_low, st.large_high};
}

NgtdmFeatures ngtdm_impl(const QuantizedWindow& q, const Compact& c, Scratch& s) {
    const int n = static_cast<int>(c.level.size());
    auto& cnt = s.px;
    auto& sdiff = s.py;
    cnt.assign(static_cast<std::size_t>(n), 0.0);
    sdiff.assign(static_cast<std::size_t>(n), 0.0);
    double nvp = 0;
    for (int y = 0; y < q.height; ++y) {
        for (int x = 0; x < q.width; ++x) {
            double nsum = 0;
            int ncount = 0;
            for (int oy = -1; oy <= 1; ++oy) {
                for (int ox = -1; ox <= 1; ++ox) {
                    const int nx = x + ox, ny = y + oy;
                    if ((ox == 0 && oy == 0) || nx < 0 || ny < 0 || nx >= q.width || ny >= q.height) continue;
                    nsum += c.level[static_cast<std::size_t>(c.index[static_cast<std::size_t>(ny * q.width + nx)])];
                    ++ncount;
                }
            }
            if (ncount == 0) continue;
            const int a = c.index[static_cast<std::size_t>(y * q.width + x)];
            cnt[static_cast<std::size_t>(a)] += 1.0;
            sdiff[static_cast<std::size_t>(a)] += std::abs(c.level[static_cast<std::size_t>(a)] - nsum / ncount);
            nvp += 1.0;
        }
    }
    if (nvp == 0.0) return NgtdmFeatures{kCoarsenessCap, 0.0, 0.0, 0.0, 0.0};

    thread_local std::vector<double> p, lv, sv;
    p.clear();
    lv.clear();
    sv.clear();
    for (int a = 0; a < n; ++a) {
        if (cnt[static_cast<std::size_t>(a)] == 0.0) continue;
        p.push_back(cnt[static_cast<std::size_t>(a)] / nvp);
        lv.push_back(c.level[static_cast<std::size_t>(a)]);
        sv.push_back(sdiff[static_cast<std::size_t>(a)]);
    }
    const std::size_t ngp = p.size();
    double ps = 0, s_total = 0;
    for (std::size_t a = 0; a < ngp; ++a) {
        ps += p[a] * sv[a];
        s_total += sv[a];
    }
    double contrast_sum = 0, busy_den = 0, complexity = 0, strength_num = 0;
    for (std::size_t a = 0; a < ngp; ++a) {
        for (std::size_t b = 0; b < ngp; ++b) {
            const double d = lv[a] - lv[b];
            contrast_sum += p[a] * p[b] * d * d;
            busy_den += std::abs(lv[a] * p[a] - lv[b] * p[b]);
            complexity += std::abs(d) * (p[a] * sv[a] + p[b] * sv[b]) / (p[a] + p[b]);
            strength_num += (p[a] + p[b]) * d * d;
        }
    }
    const double coarseness = ps > 0.0 ? 1.0 / ps : kCoarsenessCap;
    const double contrast =
        ngp > 1 ? contrast_sum / (static_cast<double>(ngp) * static_cast<double>(ngp - 1)) * s_total / nvp : 0.0;
    const double busyness = busy_den > 0.0 ? ps / busy_den : 0.0;
    const double strength = s_total > 0.0 ? strength_num / s_total : 0.0;
    return NgtdmFeatures{std::min(coarseness, kCoarsenessCap), contrast, busyness, complexity / nvp, strength};
}

GldmFeatures gldm_impl(const QuantizedWindow& q, const Compact& c, Scratch& s) {
    const int n = static_cast<int>(c.level.size());
    constexpr int kMaxDep = 9;
    constexpr int cols = kMaxDep + 1;
    auto& counts = s.matrix;
    counts.assign(static_cast<std::size_t>(n * cols), 0.0);
    for (int y = 0; y < q.height; ++y) {
        for (int x = 0; x < q.width; ++x) {
            const int a = c.index[static_cast<std::size_t>(y * q.width + x)];
            int dep = 1;
            for (int oy = -1; oy <= 1; ++oy) {
                for (int ox = -1; ox <= 1; ++ox) {
                    const int nx = x + ox, ny = y + oy;
                    if ((ox == 0 && oy == 0) || nx < 0 || ny < 0 || nx >= q.width || ny >= q.height) continue;
                    if (c.index[static_cast<std::size_t>(ny * q.width + nx)] == a) ++dep;
                }
            }
            counts[static_cast<std::size_t>(a * cols + dep)] += 1.0;
        }
    }
    const SizeMatrixStats st = size_matrix_stats(counts, c.level, kMaxDep);
    return GldmFeatures{st.small, st.large, st.gln, st.szn, st.sznn, st.glv, st.szv,
                        st.entropy, st.low, st.high, st.small_low, st.small_high, st.large_low, st.large_high};
}

template <std::size_t N, typename DirFn>
std::array<double, N> average_directions(DirFn&& per_direction) {
    std::array<double, N> acc{};
    int used = 0;
    for (int d = 0; d < static_cast<int>(kDirections.size()); ++d) {
        const std::optional<std::array<double, N>> f = per_direction(d);
        if (!f) continue;
        for (std::size_t k = 0; k < N; ++k) acc[k] += (*f)[k];
        ++used;
    }
    if (used > 0)
        for (auto& v : acc) v /= used;
    return acc;
}

GlcmFeatures glcm_all(const QuantizedWindow& q, const Compact& c, Scratch& s) {
    return average_directions<kGlcmCount>([&](int d) { return glcm_direction(q, c, d, s); });
}

GlrlmFeatures glrlm_all(const QuantizedWindow& q, const Compact& c, Scratch& s) {
    return average_directions<kGlrlmCount>(
        [&](int d) { return std::optional<GlrlmFeatures>(glrlm_direction(q, c, d, s)); });
}

void check_window(const QuantizedWindow& q) {
    if (q.width < 1 || q.height < 1 || q.levels.size() != static_cast<std::size_t>(q.width * q.height)) {
        throw Error(ErrorCode::InvalidArgument, "quantized window size mismatch");
    }
}

void check_direction(int direction) {
    if (direction < 0 || direction >= static_cast<int>(kDirections.size())) {
        throw Error(ErrorCode::InvalidArgument, "direction index out of range");
    }
}

}  // namespace

QuantizedWindow quantize(const WindowView& window, double bin_width, std::optional<double> anchor) {
    if (window.width < 1 || window.height < 1 ||
        window.values.size() != static_cast<std::size_t>(window.width * window.height)) {
        throw Error(ErrorCode::InvalidArgument, "window size mismatch");
    }
    QuantizedWindow q;
    q.width = window.width;
    q.height = window.height;
    quantize_into(window.values, bin_width, anchor, q.levels, q.ng);
    return q;
}

FirstOrder first_order(std::span<const double> values, double bin_width, double voxel_volume,
                       std::optional<double> anchor) {
    Scratch& s = scratch();
    std::vector<int> levels;
    int ng = 0;
    quantize_into(values, bin_width, anchor, levels, ng);
    return first_order_impl(values, levels, voxel_volume, s.values);
}

GlcmFeatures glcm_features(const QuantizedWindow& q) {
    check_window(q);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);
    return glcm_all(q, s.compact, s);
}

std::optional<GlcmFeatures> glcm_direction_features(const QuantizedWindow& q, int direction) {
    check_window(q);
    check_direction(direction);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);
    return glcm_direction(q, s.compact, direction, s);
}

GlrlmFeatures glrlm_features(const QuantizedWindow& q) {
    check_window(q);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);
    return glrlm_all(q, s.compact, s);
}

GlrlmFeatures glrlm_direction_features(const QuantizedWindow& q, int direction) {
    check_window(q);
    check_direction(direction);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);
    return glrlm_direction(q, s.compact, direction, s);
}

GlszmFeatures glszm_features(const QuantizedWindow& q) {
    check_window(q);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);
    return glszm_impl(q, s.compact, s);
}

NgtdmFeatures ngtdm_features(const QuantizedWindow& q) {
    check_window(q);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);
    return ngtdm_impl(q, s.compact, s);
}

GldmFeatures gldm_features(const QuantizedWindow& q) {
    check_window(q);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);
    return gldm_impl(q, s.compact, s);
}

void t2w_features(const WindowView& window, double bin_width, double voxel_volume,
                  std::optional<double> anchor, std::span<double, kT2wCount> out) {
    thread_local QuantizedWindow q;
    if (window.width < 1 || window.height < 1 ||
        window.values.size() != static_cast<std::size_t>(window.width * window.height)) {
        throw Error(ErrorCode::InvalidArgument, "window size mismatch");
    }
    q.width = window.width;
    q.height = window.height;
    quantize_into(window.values, bin_width, anchor, q.levels, q.ng);
    Scratch& s = scratch();
    build_compact(q, s.compact, s.sorted);

    auto put = [&](std::size_t offset, const auto& arr) { std::copy(arr.begin(), arr.end(), out.begin() + offset); };
    std::size_t off = 0;
    put(off, first_order_impl(window.values, q.levels, voxel_volume, s.values));
    off += kFirstOrderCount;
    put(off, glcm_all(q, s.compact, s));
    off += kGlcmCount;
    put(off, glrlm_all(q, s.compact, s));
    off += kGlrlmCount;
    put(off, glszm_impl(q, s.compact, s));
    off += kGlszmCount;
    put(off, ngtdm_impl(q, s.compact, s));
    off += kNgtdmCount;
    put(off, gldm_impl(q, s.compact, s));
}

}  // namespace prorad::texture
