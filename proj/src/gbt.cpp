#include "prorad/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "prorad/error.hpp"
#include "prorad/metrics.hpp"
#include "prorad/parallel.hpp"

namespace prorad {

double sigmoid(double m) noexcept {
    if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
    const double e = std::exp(m);
    return e / (1.0 + e);
}

double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

int Tree::leaf_index(const double* row) const noexcept {
    int i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& n = nodes[i];
        const double v = row[n.feature];
        i = std::isnan(v) ? (n.default_left ? n.left : n.right) : (v < n.threshold ? n.left : n.right);
    }
    return i;
}

double Tree::predict(const double* row) const noexcept { return nodes[leaf_index(row)].weight; }

double TreeEnsemble::margin(std::span<const double> row) const {
    if (row.size() != width())
        throw Error(ErrorCode::WidthMismatch, "row has " + std::to_string(row.size()) + " values, model expects " +
                                                  std::to_string(width()));
    double m = base_margin;
    for (const auto& t : trees) m += t.predict(row.data());
    return m;
}

double TreeEnsemble::predict_proba(std::span<const double> row) const { return sigmoid(margin(row)); }

std::vector<double> TreeEnsemble::predict_proba(std::span<const double> rows, std::size_t w, unsigned threads) const {
    if (w != width() || (w > 0 && rows.size() % w != 0))
        throw Error(ErrorCode::WidthMismatch, "row width " + std::to_string(w) + " does not match model width " +
                                                  std::to_string(width()));
    const std::size_t n = w ? rows.size() / w : 0;
    std::vector<double> out(n);
    parallel_for(n, threads, [&](std::size_t r) { out[r] = predict_proba(rows.subspan(r * w, w)); });
    return out;
}

void TrainConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::Config, "train config: " + what); };
    if (max_depth < 1) bad("max_depth must be >= 1");
    if (num_rounds < 0) bad("num_rounds must be >= 0");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) bad("learning_rate must be positive");
    if (!(min_child_weight >= 0)) bad("min_child_weight must be >= 0");
    if (!(l2_lambda >= 0)) bad("l2_lambda must be >= 0");
    if (!(gamma >= 0)) bad("gamma must be >= 0");
    if (!(subsample > 0 && subsample <= 1)) bad("subsample must be in (0, 1]");
    if (!(colsample > 0 && colsample <= 1)) bad("colsample must be in (0, 1]");
    if (early_stopping_rounds < 0) bad("early_stopping_rounds must be >= 0");
}

void Dataset::append(std::span<const double> r, double label, const std::string& patient_id) {
    if (r.size() != width) throw Error(ErrorCode::WidthMismatch, "appended row width differs from dataset width");
    x.insert(x.end(), r.begin(), r.end());
    y.push_back(label);
    patient.push_back(patient_id);
}

const char* to_string(NegativeRule r) noexcept { return r == NegativeRule::MatchPositive ? "match_positive" : "fixed_n"; }

NegativeRule negative_rule_from_string(const std::string& s) {
    if (s == "match_positive") return NegativeRule::MatchPositive;
    if (s == "fixed_n") return NegativeRule::FixedN;
    throw Error(ErrorCode::Config, "unknown negative sampling rule '" + s + "'");
}

Dataset assemble_training_set(std::span<const FeatureMatrix> matrices, const SamplingPolicy& policy,
                              std::vector<std::string>* warnings) {
    Dataset d;
    d.width = kFeatureCount;
    d.feature_names = feature_names();
    for (const auto& m : matrices) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            if (m.label[r] == 1) pos.push_back(r);
            else if (m.label[r] == 0) neg.push_back(r);
        }
        std::size_t want = policy.rule == NegativeRule::FixedN || pos.empty() ? policy.fixed_n : pos.size();
        if (want > neg.size()) {
            if (warnings)
                warnings->push_back(m.case_id + ": requested " + std::to_string(want) + " negatives, only " +
                                    std::to_string(neg.size()) + " available; using all");
            want = neg.size();
        }
        Rng rng(derive_seed(policy.seed, m.case_id));
        std::vector<std::size_t> keep = pos;
        for (std::size_t i : rng.sample_without_replacement(neg.size(), want)) keep.push_back(neg[i]);
        std::sort(keep.begin(), keep.end());
        for (std::size_t r : keep) d.append(m.row(r), m.label[r], m.case_id);
    }
    return d;
}

namespace {

struct SplitCandidate {
    double gain = -INFINITY;
    int feature = -1;
    double threshold = 0;
};

double node_score(double g, double h, double lambda) { return g * g / (h + lambda); }

double mean_logloss(const std::vector<double>& margin, const std::vector<double>& y) {
    std::vector<double> p(margin.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(margin[i]);
    return log_loss(p, y);
}

// Grows one tree level by level. `pos` holds the node each sampled row sits in (-1 for
// rows outside the subsample); `sorted` holds row indices per feature in ascending value order.
Tree grow_tree(const Dataset& data, const std::vector<std::vector<std::uint32_t>>& sorted,
               const std::vector<double>& grad, const std::vector<double>& hess, std::vector<int>& pos,
               const std::vector<int>& features, const TrainConfig& cfg, unsigned threads) {
    const std::size_t n = data.rows();
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<double> G(1, 0.0), H(1, 0.0), C(1, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        if (pos[r] == 0) {
            G[0] += grad[r];
            H[0] += hess[r];
            C[0] += 1;
        }
    std::vector<int> frontier{0};
    for (int depth = 0; depth < cfg.max_depth && !frontier.empty(); ++depth) {
        std::vector<int> slot(tree.nodes.size(), -1);
        for (std::size_t s = 0; s < frontier.size(); ++s) slot[frontier[s]] = static_cast<int>(s);
        const std::size_t m = frontier.size();

        std::vector<std::vector<SplitCandidate>> best(features.size(), std::vector<SplitCandidate>(m));
        parallel_for(features.size(), threads, [&](std::size_t fi) {
            const int f = features[fi];
            std::vector<double> gl(m, 0.0), hl(m, 0.0), last(m, 0.0);
            std::vector<char> seen(m, 0);
            auto& out = best[fi];
            for (std::uint32_t r : sorted[f]) {
                const int node = pos[r];
                if (node < 0) continue;
                const int s = slot[node];
                if (s < 0) continue;
                const double v = data.x[r * data.width + f];
                if (seen[s] && v != last[s]) {
                    const double gr = G[node] - gl[s], hr = H[node] - hl[s];
                    if (hl[s] >= cfg.min_child_weight && hr >= cfg.min_child_weight) {
                        const double gain = 0.5 * (node_score(gl[s], hl[s], cfg.l2_lambda) +
                                                   node_score(gr, hr, cfg.l2_lambda) -
                                                   node_score(G[node], H[node], cfg.l2_lambda));
                        if (gain > out[s].gain) {
                            double thr = 0.5 * (last[s] + v);
                            if (!(thr > last[s])) thr = v;
                            out[s] = {gain, f, thr};
                        }
                    }
                }
                gl[s] += grad[r];
                hl[s] += hess[r];
                last[s] = v;
                seen[s] = 1;
            }
        });

        std::vector<int> next;
        std::vector<int> left_of(tree.nodes.size(), -1);
        for (std::size_t s = 0; s < m; ++s) {
            SplitCandidate win;
            for (std::size_t fi = 0; fi < features.size(); ++fi) {
                const auto& c = best[fi][s];
                if (c.feature < 0) continue;
                if (c.gain > win.gain || (c.gain == win.gain && c.feature < win.feature)) win = c;
            }
            const int node = frontier[s];
            if (win.feature < 0 || !(win.gain > cfg.gamma)) continue;
            const int l = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            TreeNode& nd = tree.nodes[node];
            nd.feature = win.feature;
            nd.threshold = win.threshold;
            nd.left = l;
            nd.right = l + 1;
            nd.gain = win.gain;
            left_of[node] = l;
            G.resize(tree.nodes.size(), 0.0);
            H.resize(tree.nodes.size(), 0.0);
            C.resize(tree.nodes.size(), 0.0);
            next.push_back(l);
            next.push_back(l + 1);
        }
        if (next.empty()) break;
        for (std::size_t r = 0; r < n; ++r) {
            const int node = pos[r];
            if (node < 0 || node >= static_cast<int>(left_of.size()) || left_of[node] < 0) continue;
            const TreeNode& nd = tree.nodes[node];
            const int child = data.x[r * data.width + nd.feature] < nd.threshold ? nd.left : nd.right;
            pos[r] = child;
            G[child] += grad[r];
            H[child] += hess[r];
            C[child] += 1;
        }
        frontier = std::move(next);
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        TreeNode& nd = tree.nodes[i];
        nd.cover = C[i];
        if (nd.is_leaf()) {
            nd.weight = -cfg.learning_rate * G[i] / (H[i] + cfg.l2_lambda);
            if (nd.weight == 0.0) nd.weight = 0.0;  // no negative zero in the bundle
        }
    }
    return tree;
}

void check_trainable(const Dataset& data) {
    if (data.rows() < 2) throw Error(ErrorCode::SingleClass, "training needs at least two rows");
    bool pos = false, neg = false;
    for (double v : data.y) {
        if (v != 0.0 && v != 1.0) throw Error(ErrorCode::InvalidArgument, "training labels must be 0 or 1");
        (v == 1.0 ? pos : neg) = true;
    }
    if (!pos || !neg) throw Error(ErrorCode::SingleClass, "training data contains a single class");
    if (data.x.size() != data.rows() * data.width) throw Error(ErrorCode::WidthMismatch, "design matrix size mismatch");
}

}  // namespace

TreeEnsemble train(const Dataset& data, const TrainConfig& cfg, const Dataset* valid, TrainLog* log, unsigned threads) {
    cfg.validate();
    check_trainable(data);
    if (valid && valid->width != data.width) throw Error(ErrorCode::WidthMismatch, "validation width differs");
    const std::size_t n = data.rows(), d = data.width;

    TreeEnsemble ens;
    ens.feature_names = data.feature_names;
    if (ens.feature_names.empty())
        for (std::size_t j = 0; j < d; ++j) ens.feature_names.push_back("f" + std::to_string(j));
    const double prior = std::accumulate(data.y.begin(), data.y.end(), 0.0) / static_cast<double>(n);
    ens.base_margin = logit(prior);

    std::vector<std::vector<std::uint32_t>> sorted(d);
    parallel_for(d, threads, [&](std::size_t f) {
        auto& idx = sorted[f];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0u);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return data.x[a * d + f] < data.x[b * d + f]; });
    });

    std::vector<double> margin(n, ens.base_margin), grad(n), hess(n);
    std::vector<double> vmargin(valid ? valid->rows() : 0, ens.base_margin);
    Rng rng(cfg.seed);
    const std::size_t n_sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.subsample * static_cast<double>(n))));
    const std::size_t n_col = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.colsample * static_cast<double>(d))));
    const bool stopping = valid && valid->rows() > 0 && cfg.early_stopping_rounds > 0;
    double best_valid = INFINITY;
    int best_rounds = 0;
    TrainLog local;
    TrainLog& lg = log ? *log : local;
    lg = {};

    std::vector<int> pos(n);
    for (int round = 0; round < cfg.num_rounds; ++round) {
        for (std::size_t r = 0; r < n; ++r) {
            const double p = sigmoid(margin[r]);
            grad[r] = p - data.y[r];
            hess[r] = p * (1 - p);
        }
        if (n_sub < n) {
            std::fill(pos.begin(), pos.end(), -1);
            for (std::size_t r : rng.sample_without_replacement(n, n_sub)) pos[r] = 0;
        } else {
            std::fill(pos.begin(), pos.end(), 0);
        }
        std::vector<int> cols;
        if (n_col < d) {
            for (std::size_t j : rng.sample_without_replacement(d, n_col)) cols.push_back(static_cast<int>(j));
        } else {
            cols.resize(d);
            std::iota(cols.begin(), cols.end(), 0);
        }
        Tree tree = grow_tree(data, sorted, grad, hess, pos, cols, cfg, threads);
        for (std::size_t r = 0; r < n; ++r) margin[r] += tree.predict(&data.x[r * d]);
        ens.trees.push_back(std::move(tree));
        lg.train_logloss.push_back(mean_logloss(margin, data.y));
        if (valid) {
            for (std::size_t r = 0; r < vmargin.size(); ++r) vmargin[r] += ens.trees.back().predict(&valid->x[r * d]);
            const double vl = mean_logloss(vmargin, valid->y);
            lg.valid_logloss.push_back(vl);
            if (vl < best_valid) {
                best_valid = vl;
                best_rounds = round + 1;
            }
            if (stopping && round + 1 - best_rounds >= cfg.early_stopping_rounds) break;
        }
    }
    if (stopping) ens.trees.resize(static_cast<std::size_t>(best_rounds));
    lg.best_rounds = static_cast<int>(ens.trees.size());
    return ens;
}

int FoldAssignment::fold_of(const std::string& p) const {
    const auto it = std::lower_bound(patients.begin(), patients.end(), p);
    if (it == patients.end() || *it != p) throw Error(ErrorCode::InvalidArgument, "patient '" + p + "' not in fold assignment");
    return fold[static_cast<std::size_t>(it - patients.begin())];
}

FoldAssignment stratified_patient_folds(const Dataset& data, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "cross-validation needs k >= 2");
    std::map<std::string, bool> positive;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        bool& p = positive[data.patient[r]];
        p = p || data.y[r] == 1.0;
    }
    std::vector<std::string> pos, neg;
    for (const auto& [id, p] : positive) (p ? pos : neg).push_back(id);
    if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k))
        throw Error(ErrorCode::TooFewPatients, std::to_string(pos.size()) + " positive and " + std::to_string(neg.size()) +
                                                   " negative patients for " + std::to_string(k) + " folds");
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::map<std::string, int> fold;
    for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = static_cast<int>(i % k);
    for (std::size_t j = 0; j < neg.size(); ++j) fold[neg[j]] = static_cast<int>((pos.size() + j) % k);
    FoldAssignment a;
    for (const auto& [id, f] : fold) {
        a.patients.push_back(id);
        a.fold.push_back(f);
    }
    return a;
}

namespace {

Dataset subset(const Dataset& data, const std::vector<std::size_t>& rows) {
    Dataset s;
    s.width = data.width;
    s.feature_names = data.feature_names;
    s.x.reserve(rows.size() * data.width);
    for (std::size_t r : rows) s.append(data.row(r), data.y[r], data.patient[r]);
    return s;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

CvResult cross_validate(const Dataset& data, const TrainConfig& cfg, int k, unsigned threads) {
    CvResult res;
    res.folds = stratified_patient_folds(data, k, cfg.seed);
    std::vector<int> row_fold(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) row_fold[r] = res.folds.fold_of(data.patient[r]);
    res.oof_probability.assign(data.rows(), 0.0);
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> tr, va;
        for (std::size_t r = 0; r < data.rows(); ++r) (row_fold[r] == f ? va : tr).push_back(r);
        const Dataset dtr = subset(data, tr), dva = subset(data, va);
        const TreeEnsemble ens = train(dtr, cfg, &dva, nullptr, threads);
        const auto p = ens.predict_proba(dva.x, dva.width, threads);
        for (std::size_t i = 0; i < va.size(); ++i) res.oof_probability[va[i]] = p[i];
        res.fold_logloss.push_back(log_loss(p, dva.y));
        std::vector<int> lab(dva.y.begin(), dva.y.end());
        const bool both = std::count(lab.begin(), lab.end(), 1) > 0 && std::count(lab.begin(), lab.end(), 0) > 0;
        res.fold_auroc.push_back(both ? auroc(p, lab) : NAN);
        res.fold_rounds.push_back(static_cast<int>(ens.trees.size()));
    }
    res.mean_logloss = mean(res.fold_logloss);
    res.sd_logloss = sample_sd(res.fold_logloss);
    return res;
}

TrainConfig sample_config(const SearchSpace& s, Rng& rng, const TrainConfig& base) {
    TrainConfig c = base;
    c.max_depth = static_cast<int>(rng.integer(s.depth_min, s.depth_max));
    c.learning_rate = rng.log_uniform(s.eta_min, s.eta_max);
    c.num_rounds = s.max_rounds;
    c.min_child_weight = rng.uniform(s.mcw_min, s.mcw_max);
    c.l2_lambda = rng.log_uniform(s.lambda_min, s.lambda_max);
    c.gamma = rng.uniform(s.gamma_min, s.gamma_max);
    c.subsample = rng.uniform(s.subsample_min, s.subsample_max);
    c.colsample = rng.uniform(s.colsample_min, s.colsample_max);
    if (c.early_stopping_rounds == 0) c.early_stopping_rounds = 20;  // rounds are capped, not fixed
    return c;
}

TuneResult tune(const Dataset& data, const SearchSpace& space, int trials, std::uint64_t seed, const TrainConfig& base,
                int k, unsigned threads) {
    if (trials < 1) throw Error(ErrorCode::InvalidArgument, "tuning needs at least one trial");
    Rng rng(seed);
    TuneResult out;
    for (int t = 0; t < trials; ++t) {
        TrialRecord rec;
        rec.config = sample_config(space, rng, base);
        const CvResult cv = cross_validate(data, rec.config, k, threads);
        rec.mean_logloss = cv.mean_logloss;
        rec.sd_logloss = cv.sd_logloss;
        const double mr = std::accumulate(cv.fold_rounds.begin(), cv.fold_rounds.end(), 0.0) / cv.fold_rounds.size();
        rec.mean_rounds = std::max(1, static_cast<int>(std::lround(mr)));
        if (t == 0 || rec.mean_logloss < out.trials[out.best_trial].mean_logloss) out.best_trial = static_cast<std::size_t>(t);
        out.trials.push_back(rec);
    }
    out.best = out.trials[out.best_trial].config;
    out.best.num_rounds = out.trials[out.best_trial].mean_rounds;
    return out;
}

}  // namespace prorad
