#include "prorad/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace prorad {

Volume3D dual_reference_normalize(const Volume3D& t2w, double ref_low, double ref_high) {
    if (!(ref_high > ref_low)) throw Error(ErrorCode::InvalidArgument, "reference high must exceed reference low");
    Volume3D out(t2w.grid());
    const double scale = 1.0 / (ref_high - ref_low);
    for (std::size_t i = 0; i < t2w.size(); ++i) out[i] = (t2w[i] - ref_low) * scale;
    return out;
}

double masked_median(const Volume3D& vol, const Mask3D& mask) {
    require_same_grid(vol, mask);
    std::vector<double> v;
    for (std::size_t i = 0; i < vol.size(); ++i)
        if (mask[i]) v.push_back(vol[i]);
    if (v.empty()) throw Error(ErrorCode::EmptyMask, "median over an empty mask");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

AdcFitResult fit_adc(std::span<const DwiSample> series, double b_min, double b_max) {
    std::vector<const DwiSample*> used;
    std::set<double> distinct;
    for (const auto& s : series) {
        if (s.b >= b_min && s.b <= b_max) {
            used.push_back(&s);
            distinct.insert(s.b);
        }
    }
    if (distinct.size() < 2) throw Error(ErrorCode::InsufficientBValues, "need two b-values inside the fit range");
    const Grid& g = used.front()->signal.grid();
    for (const auto* s : used) require_same_grid(used.front()->signal, s->signal);

    AdcFitResult r{Volume3D(g), Volume3D(g), Mask3D(g)};
    std::vector<double> b, y;
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
        b.clear();
        y.clear();
        for (const auto* s : used) {
            const double v = s->signal[i];
            if (v > 0.0) {
                b.push_back(s->b);
                y.push_back(std::log(v));
            }
        }
        if (b.size() < 2) continue;
        double bm = 0, ym = 0;
        for (std::size_t k = 0; k < b.size(); ++k) {
            bm += b[k];
            ym += y[k];
        }
        bm /= static_cast<double>(b.size());
        ym /= static_cast<double>(b.size());
        double sbb = 0, sby = 0;
        for (std::size_t k = 0; k < b.size(); ++k) {
            sbb += (b[k] - bm) * (b[k] - bm);
            sby += (b[k] - bm) * (y[k] - ym);
        }
        if (sbb <= 0.0) continue;  // all positive samples share one b-value
        const double slope = sby / sbb;
        if (slope < 0.0) {
            r.adc[i] = -slope;
            r.s0[i] = std::exp(ym - slope * bm);
        } else {
            // Clamped to zero decay: the constrained least-squares intercept is the mean.
            r.adc[i] = 0.0;
            r.s0[i] = std::exp(ym);
        }
        r.valid[i] = 1;
    }
    return r;
}

Volume3D synthesize_high_bvalue(const AdcFitResult& fit, double b_target) {
    if (!(b_target > 0.0)) throw Error(ErrorCode::InvalidArgument, "target b-value must be positive");
    Volume3D out(fit.adc.grid());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = fit.valid[i] ? fit.s0[i] * std::exp(-b_target * fit.adc[i]) : 0.0;
    return out;
}

const char* to_string(StatsScope s) noexcept { return s == StatsScope::Global ? "global" : "patient"; }

const char* to_string(Channel c) noexcept {
    switch (c) {
        case Channel::T2w: return "t2w";
        case Channel::Adc: return "adc";
        case Channel::Hbv: return "hbv";
    }
    return "?";
}

StatsScope stats_scope_from_string(const std::string& s) {
    if (s == "global") return StatsScope::Global;
    if (s == "patient") return StatsScope::Patient;
    throw Error(ErrorCode::Schema, "unknown stats scope '" + s + "'");
}

Channel channel_from_string(const std::string& s) {
    if (s == "t2w") return Channel::T2w;
    if (s == "adc") return Channel::Adc;
    if (s == "hbv") return Channel::Hbv;
    throw Error(ErrorCode::Schema, "unknown channel '" + s + "'");
}

NormalizationStats compute_stats(std::span<const MaskedVolume> inputs, StatsScope scope, Channel channel) {
    if (inputs.empty()) throw Error(ErrorCode::EmptyMask, "no volumes to compute statistics from");
    if (scope == StatsScope::Patient && inputs.size() != 1)
        throw Error(ErrorCode::InvalidArgument, "patient-scope statistics take exactly one volume");
    // Two passes in long double keep pooled statistics stable across large cohorts.
    long double sum = 0;
    std::size_t n = 0;
    for (const auto& in : inputs) {
        require_same_grid(*in.volume, *in.mask);
        for (std::size_t i = 0; i < in.volume->size(); ++i) {
            if ((*in.mask)[i]) {
                sum += (*in.volume)[i];
                ++n;
            }
        }
    }
    if (n == 0) throw Error(ErrorCode::EmptyMask, "statistics mask is empty");
    const long double mean = sum / static_cast<long double>(n);
    long double ss = 0;
    for (const auto& in : inputs)
        for (std::size_t i = 0; i < in.volume->size(); ++i)
            if ((*in.mask)[i]) ss += ((*in.volume)[i] - mean) * ((*in.volume)[i] - mean);
    return {static_cast<double>(mean), static_cast<double>(std::sqrt(ss / static_cast<long double>(n))), scope, channel};
}

Volume3D gaussian_normalize(const Volume3D& vol, const NormalizationStats& stats) {
    if (!(stats.std > 0.0)) throw Error(ErrorCode::InvalidArgument, "normalization std must be positive");
    Volume3D out(vol.grid());
    for (std::size_t i = 0; i < vol.size(); ++i) out[i] = (vol[i] - stats.mean) / stats.std;
    return out;
}

Volume3D gaussian_denormalize(const Volume3D& z, const NormalizationStats& stats) {
    if (!(stats.std > 0.0)) throw Error(ErrorCode::InvalidArgument, "normalization std must be positive");
    Volume3D out(z.grid());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * stats.std + stats.mean;
    return out;
}

const char* to_string(NormalizationPairing p) noexcept {
    switch (p) {
        case NormalizationPairing::MeanGlobalStdPatient: return "mean_global_std_patient";
        case NormalizationPairing::MeanPatientStdGlobal: return "mean_patient_std_global";
        case NormalizationPairing::BothGlobal: return "both_global";
        case NormalizationPairing::BothPatient: return "both_patient";
    }
    return "?";
}

NormalizationPairing pairing_from_string(const std::string& s) {
    for (auto p : {NormalizationPairing::MeanGlobalStdPatient, NormalizationPairing::MeanPatientStdGlobal,
                   NormalizationPairing::BothGlobal, NormalizationPairing::BothPatient})
        if (s == to_string(p)) return p;
    throw Error(ErrorCode::Config, "unknown normalization pairing '" + s + "'");
}

NormalizationStats pair_stats(const NormalizationStats& global, const NormalizationStats& patient,
                              NormalizationPairing pairing) {
    NormalizationStats s = patient;
    switch (pairing) {
        case NormalizationPairing::MeanGlobalStdPatient: s.mean = global.mean; s.std = patient.std; break;
        case NormalizationPairing::MeanPatientStdGlobal: s.mean = patient.mean; s.std = global.std; break;
        case NormalizationPairing::BothGlobal: s = global; break;
        case NormalizationPairing::BothPatient: s = patient; break;
    }
    return s;
}

PreparedCase prepare_case(const CaseRecord& c, const PreprocessConfig& cfg) {
    PreparedCase p;
    p.case_id = c.case_id;
    p.split = c.split;
    p.gt_lesions = c.gt_lesions;
    p.pirads_patient = c.pirads_patient;

    p.ref_low = c.ref_low ? *c.ref_low : (c.ref_low_mask ? masked_median(c.t2w, *c.ref_low_mask) : NAN);
    p.ref_high = c.ref_high ? *c.ref_high : (c.ref_high_mask ? masked_median(c.t2w, *c.ref_high_mask) : NAN);
    if (std::isnan(p.ref_low) || std::isnan(p.ref_high))
        throw Error(ErrorCode::Config, c.case_id + ": T2W reference intensities are not configured");

    const Volume3D t2w = resample_inplane(c.t2w, cfg.inplane_spacing, cfg.inplane_spacing, cfg.t2w_interpolation);
    const Grid& g = t2w.grid();
    p.t2w_norm = dual_reference_normalize(t2w, p.ref_low, p.ref_high);

    std::optional<AdcFitResult> fit;
    if (!c.dwi.empty() && (!c.adc || !c.hbv)) fit = fit_adc(c.dwi, cfg.adc_b_min, cfg.adc_b_max);
    const Volume3D adc = c.adc ? *c.adc : fit->adc;
    const Volume3D hbv = c.hbv ? *c.hbv : synthesize_high_bvalue(*fit, cfg.hbv_b);
    p.adc = resample_to_grid(adc, g, Interpolation::Linear);
    p.hbv = resample_to_grid(hbv, g, Interpolation::Linear);

    p.prostate = resample_to_grid(c.prostate, g);
    p.pz = resample_to_grid(c.pz, g);
    if (count_nonzero(p.prostate) == 0) throw Error(ErrorCode::EmptyMask, c.case_id + ": prostate mask vanished after resampling");
    if (c.pz_likelihood) p.pz_likelihood = resample_to_grid(*c.pz_likelihood, g, Interpolation::Linear);
    if (c.gt_labels) p.gt_labels = resample_to_grid(*c.gt_labels, g);
    return p;
}

GlobalStats compute_global_stats(std::span<const PreparedCase* const> cases) {
    std::vector<MaskedVolume> adc, hbv;
    for (const PreparedCase* c : cases) {
        adc.push_back({&c->adc, &c->prostate});
        hbv.push_back({&c->hbv, &c->prostate});
    }
    return {compute_stats(adc, StatsScope::Global, Channel::Adc), compute_stats(hbv, StatsScope::Global, Channel::Hbv)};
}

void normalize_diffusion(PreparedCase& c, const GlobalStats& global, NormalizationPairing pairing) {
    const MaskedVolume adc{&c.adc, &c.prostate};
    const MaskedVolume hbv{&c.hbv, &c.prostate};
    const NormalizationStats adc_patient = compute_stats({&adc, 1}, StatsScope::Patient, Channel::Adc);
    const NormalizationStats hbv_patient = compute_stats({&hbv, 1}, StatsScope::Patient, Channel::Hbv);
    c.adc_norm = gaussian_normalize(c.adc, pair_stats(global.adc, adc_patient, pairing));
    c.hbv_norm = gaussian_normalize(c.hbv, pair_stats(global.hbv, hbv_patient, pairing));
}

}  // namespace prorad
