#include "prorad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

namespace prorad {

namespace {

void check_pair(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
    bool pos = false, neg = false;
    for (int l : labels) {
        if (l != 0 && l != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
        (l ? pos : neg) = true;
    }
    if (!pos || !neg) throw Error(ErrorCode::SingleClass, "both classes must be present");
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

// Per-positive and per-negative placement values: V10[i] = mean_j psi(x_i, y_j),
// V01[j] = mean_i psi(x_i, y_j), psi = 1 / 0.5 / 0.
void placements(std::span<const double> s, std::span<const int> labels, std::vector<double>& v10, std::vector<double>& v01) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < s.size(); ++i) (labels[i] ? pos : neg).push_back(s[i]);
    v10.assign(pos.size(), 0.0);
    v01.assign(neg.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i)
        for (std::size_t j = 0; j < neg.size(); ++j) {
            const double psi = pos[i] > neg[j] ? 1.0 : (pos[i] == neg[j] ? 0.5 : 0.0);
            v10[i] += psi;
            v01[j] += psi;
        }
    for (auto& v : v10) v /= static_cast<double>(neg.size());
    for (auto& v : v01) v /= static_cast<double>(pos.size());
}

double covariance(const std::vector<double>& a, const std::vector<double>& b, double ma, double mb) {
    if (a.size() < 2) return 0.0;
    double c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) c += (a[i] - ma) * (b[i] - mb);
    return c / static_cast<double>(a.size() - 1);
}

AucInterval interval(double auc, double var) {
    const double se = std::sqrt(std::max(0.0, var));
    return {auc, se, std::max(0.0, auc - 1.96 * se), std::min(1.0, auc + 1.96 * se)};
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
    check_pair(scores, labels);
    // Rank-sum form with mid-ranks; half-integer sums are exact in double.
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0, npos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]]) {
                rank_sum += mid;
                npos += 1;
            }
        i = j;
    }
    const double nneg = static_cast<double>(scores.size()) - npos;
    return (rank_sum - npos * (npos + 1) / 2) / (npos * nneg);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
    check_pair(scores, labels);
    const auto idx = order_descending(scores);
    double npos = 0;
    for (int l : labels) npos += l;
    const double nneg = static_cast<double>(labels.size()) - npos;
    RocCurve c;
    c.thresholds.push_back(INFINITY);
    c.fpr.push_back(0);
    c.tpr.push_back(0);
    double tp = 0, fp = 0, area2 = 0;  // twice the area in count units
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        const double prev_tp = tp, prev_fp = fp;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) (labels[idx[j++]] ? tp : fp) += 1;
        area2 += (fp - prev_fp) * (tp + prev_tp);
        c.thresholds.push_back(scores[idx[i]]);
        c.fpr.push_back(fp / nneg);
        c.tpr.push_back(tp / npos);
        i = j;
    }
    c.auc = area2 / (2 * npos * nneg);
    return c;
}

AucInterval auc_with_ci(std::span<const double> scores, std::span<const int> labels) {
    check_pair(scores, labels);
    std::vector<double> v10, v01;
    placements(scores, labels, v10, v01);
    const double auc = auroc(scores, labels);
    const double var = covariance(v10, v10, auc, auc) / static_cast<double>(v10.size()) +
                       covariance(v01, v01, auc, auc) / static_cast<double>(v01.size());
    return interval(auc, var);
}

DelongResult delong_compare(std::span<const double> a, std::span<const double> b, std::span<const int> labels) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "paired score vectors differ in length");
    check_pair(a, labels);
    std::vector<double> a10, a01, b10, b01;
    placements(a, labels, a10, a01);
    placements(b, labels, b10, b01);
    const double auc_a = auroc(a, labels), auc_b = auroc(b, labels);
    const double m = static_cast<double>(a10.size()), n = static_cast<double>(a01.size());
    const double var_a = covariance(a10, a10, auc_a, auc_a) / m + covariance(a01, a01, auc_a, auc_a) / n;
    const double var_b = covariance(b10, b10, auc_b, auc_b) / m + covariance(b01, b01, auc_b, auc_b) / n;
    const double cov = covariance(a10, b10, auc_a, auc_b) / m + covariance(a01, b01, auc_a, auc_b) / n;
    DelongResult r{interval(auc_a, var_a), interval(auc_b, var_b), cov, 0.0, 1.0};
    const double diff = auc_a - auc_b;
    const double var = var_a + var_b - 2 * cov;
    if (var <= 1e-300) {
        r.p_value = diff == 0.0 ? 1.0 : 0.0;
        r.z = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
        return r;
    }
    r.z = diff / std::sqrt(var);
    r.p_value = std::erfc(std::abs(r.z) / std::numbers::sqrt2);
    return r;
}

LesionMatchResult match_lesions(const LabelVolume& pred, std::span<const PredictedLesion> preds,
                                const LabelVolume& gt, std::span<const int> gt_ids) {
    require_same_grid(pred, gt);
    std::map<int, double> score;
    for (const auto& p : preds) score[p.id] = p.score;
    const std::set<int> gts(gt_ids.begin(), gt_ids.end());
    std::map<int, std::uint64_t> pred_count, gt_count;
    std::map<std::pair<int, int>, std::uint64_t> inter;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i], g = gt[i];
        const bool pv = p != 0 && score.count(p), gv = g != 0 && gts.count(g);
        if (pv) ++pred_count[p];
        if (gv) ++gt_count[g];
        if (pv && gv) ++inter[{p, g}];
    }
    struct Candidate {
        int p, g;
        double score, iou;
    };
    std::vector<Candidate> cand;
    for (const auto& [key, n] : inter) {
        const std::uint64_t uni = pred_count[key.first] + gt_count[key.second] - n;
        if (iou_is_hit(n, uni)) cand.push_back({key.first, key.second, score[key.first], static_cast<double>(n) / static_cast<double>(uni)});
    }
    std::sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) {
        if (x.score != y.score) return x.score > y.score;
        if (x.iou != y.iou) return x.iou > y.iou;
        if (x.p != y.p) return x.p < y.p;
        return x.g < y.g;
    });
    LesionMatchResult r;
    std::set<int> used_p, used_g;
    for (const auto& c : cand) {
        if (used_p.count(c.p) || used_g.count(c.g)) continue;
        used_p.insert(c.p);
        used_g.insert(c.g);
        r.hits.push_back({c.p, c.g, c.iou});
    }
    for (const auto& p : preds)
        if (!used_p.count(p.id)) r.false_positives.push_back(p.id);
    for (int g : gts)
        if (!used_g.count(g)) r.missed.push_back(g);
    return r;
}

namespace {

std::vector<ScoredDetection> pooled_by_score(std::span<const CaseDetections> cases) {
    std::vector<ScoredDetection> all;
    for (const auto& c : cases) all.insert(all.end(), c.detections.begin(), c.detections.end());
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    return all;
}

}  // namespace

FrocCurve froc(std::span<const CaseDetections> cases) {
    if (cases.empty()) throw Error(ErrorCode::InvalidArgument, "FROC needs at least one case");
    FrocCurve c;
    c.cases = static_cast<std::int64_t>(cases.size());
    for (const auto& k : cases) c.total_gt += k.num_gt;
    const auto all = pooled_by_score(cases);
    const double ncase = static_cast<double>(c.cases);
    const double ngt = static_cast<double>(c.total_gt);
    c.points.push_back({INFINITY, 0.0, 0.0, 0, 0});
    std::int64_t hits = 0, fps = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) (all[j++].hit ? hits : fps) += 1;
        c.points.push_back({all[i].score, static_cast<double>(fps) / ncase, ngt > 0 ? static_cast<double>(hits) / ngt : 0.0, hits, fps});
        i = j;
    }
    return c;
}

double sensitivity_at_fp(const FrocCurve& curve, double fp_rate) {
    double best = 0.0;
    for (const auto& p : curve.points)
        if (p.fp_per_case <= fp_rate + 1e-12) best = std::max(best, p.sensitivity);
    return best;
}

double average_precision(std::span<const CaseDetections> cases, std::int64_t total_gt, std::vector<PrPoint>* curve) {
    if (total_gt < 1) throw Error(ErrorCode::InvalidArgument, "average precision needs at least one ground-truth lesion");
    const auto all = pooled_by_score(cases);
    double ap = 0, prev_recall = 0;
    std::int64_t tp = 0, n = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) {
            tp += all[j].hit ? 1 : 0;
            ++n;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_gt);
        const double precision = static_cast<double>(tp) / static_cast<double>(n);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        if (curve) curve->push_back({all[i].score, recall, precision});
        i = j;
    }
    return ap;
}

OperatingPoint operating_point(std::span<const double> scores, std::span<const int> labels, double t) {
    check_pair(scores, labels);
    OperatingPoint o;
    o.threshold = t;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool called = scores[i] >= t;
        if (labels[i]) (called ? o.tp : o.fn) += 1;
        else (called ? o.fp : o.tn) += 1;
    }
    o.sensitivity = static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fn);
    o.specificity = static_cast<double>(o.tn) / static_cast<double>(o.tn + o.fp);
    o.precision = (o.tp + o.fp) > 0 ? static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fp) : 0.0;
    return o;
}

double log_loss(std::span<const double> p, std::span<const double> y) {
    if (p.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "log_loss inputs differ in length");
    if (p.empty()) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], 1e-15, 1.0 - 1e-15);
        s -= y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q);
    }
    return s / static_cast<double>(p.size());
}

}  // namespace prorad
