#include "prorad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "prorad/detect.hpp"
#include "prorad/error.hpp"
#include "prorad/hash.hpp"
#include "prorad/metrics.hpp"
#include "prorad/nifti.hpp"
#include "prorad/parallel.hpp"
#include "prorad/plot.hpp"
#include "prorad/shap.hpp"

namespace fs = std::filesystem;

namespace prorad {

namespace {

void say(const RunContext& ctx, const std::string& msg) {
    if (ctx.log) ctx.log(msg);
}

std::string descrip(const RunContext& ctx) { return "prorad cfg=" + ctx.config_hash; }

Json header(const char* format, const RunContext& ctx) {
    Json j;
    j["format"] = format;
    j["version"] = 1;
    j["config_hash"] = ctx.config_hash;
    return j;
}

// Stages own their directory; stale files from an earlier case set must not survive.
void fresh_dir(const fs::path& p) {
    fs::remove_all(p);
    fs::create_directories(p);
}

void require_hash(const Json& j, const RunContext& ctx, const std::string& what) {
    if (!j.contains("config_hash") || j["config_hash"] != ctx.config_hash)
        throw Error(ErrorCode::Schema, what + " was produced under config " + j.value("config_hash", std::string("?")) +
                                           ", current config is " + ctx.config_hash);
}

std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fraction(std::int64_t a, std::int64_t b) { return std::to_string(a) + "/" + std::to_string(b); }

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// --- stage indices -------------------------------------------------------------------

struct CaseIndex {
    std::vector<std::string> ids;
    std::map<std::string, std::string> split;
};

CaseIndex read_index(const fs::path& path, const RunContext& ctx) {
    if (!fs::exists(path)) throw Error(ErrorCode::IoFailure, "missing upstream index " + path.string());
    const Json j = read_json(path);
    require_hash(j, ctx, path.string());
    CaseIndex idx;
    for (const auto& c : j.at("cases")) {
        idx.ids.push_back(c.at("case_id").get<std::string>());
        idx.split[idx.ids.back()] = c.at("split").get<std::string>();
    }
    return idx;
}

void write_index(const fs::path& path, const RunContext& ctx, const char* format, const std::vector<std::string>& ids,
                 const std::map<std::string, std::string>& split, const std::vector<std::string>& failed) {
    Json j = header(format, ctx);
    Json cases = Json::array();
    for (const auto& id : ids) cases.push_back({{"case_id", id}, {"split", split.at(id)}});
    j["cases"] = cases;
    j["failed"] = failed;
    write_json(j, path);
}

// Cases scored in evaluation: the test split, or every case when there is none.
std::vector<std::string> evaluation_cases(const CaseIndex& idx, std::vector<std::string>* warnings) {
    std::vector<std::string> out;
    for (const auto& id : idx.ids)
        if (idx.split.at(id) == "test") out.push_back(id);
    if (out.empty()) {
        if (warnings) warnings->push_back("no test-split cases; evaluating every case");
        out = idx.ids;
    }
    return out;
}

// --- per-case preprocess artefacts ----------------------------------------------------

fs::path case_dir(const OutputLayout& out, const std::string& id) { return out.preprocess() / id; }

Json case_meta(const PreparedCase& c, const RunContext& ctx) {
    Json j = header("prorad-case", ctx);
    j["case_id"] = c.case_id;
    j["split"] = c.split;
    j["ref_low"] = c.ref_low;
    j["ref_high"] = c.ref_high;
    j["pirads_patient"] = c.pirads_patient ? Json(*c.pirads_patient) : Json(nullptr);
    Json les = Json::array();
    for (const auto& l : c.gt_lesions)
        les.push_back({{"label", l.label}, {"gg", l.grade_group}, {"pirads", l.pirads ? Json(*l.pirads) : Json(nullptr)}});
    j["lesions"] = les;
    j["has_gt_labels"] = c.gt_labels.has_value();
    j["has_pz_likelihood"] = c.pz_likelihood.has_value();
    return j;
}

void write_prepared(const PreparedCase& c, const RunContext& ctx) {
    const fs::path d = case_dir(ctx.out, c.case_id);
    fs::create_directories(d);
    const std::string note = descrip(ctx);
    write_nifti(c.t2w_norm, d / "t2w_norm.nii.gz", NiftiType::F64, note);
    write_nifti(c.adc, d / "adc.nii.gz", NiftiType::F64, note);
    write_nifti(c.hbv, d / "hbv.nii.gz", NiftiType::F64, note);
    write_nifti(c.adc_norm, d / "adc_norm.nii.gz", NiftiType::F64, note);
    write_nifti(c.hbv_norm, d / "hbv_norm.nii.gz", NiftiType::F64, note);
    write_nifti(c.prostate, d / "prostate.nii.gz", note);
    write_nifti(c.pz, d / "pz.nii.gz", note);
    if (c.pz_likelihood) write_nifti(*c.pz_likelihood, d / "pz_likelihood.nii.gz", NiftiType::F64, note);
    if (c.gt_labels) write_nifti(*c.gt_labels, d / "gt_labels.nii.gz", note);
    write_json(case_meta(c, ctx), d / "case.json");
}

Json read_case_meta(const OutputLayout& out, const std::string& id) { return read_json(case_dir(out, id) / "case.json"); }

std::vector<GtLesion> lesions_of(const Json& meta) {
    std::vector<GtLesion> v;
    for (const auto& l : meta.at("lesions")) {
        GtLesion g;
        g.label = l.at("label").get<int>();
        g.grade_group = l.at("gg").get<int>();
        if (!l.at("pirads").is_null()) g.pirads = l.at("pirads").get<int>();
        v.push_back(g);
    }
    return v;
}

// Volumes written by this tool round-trip its grids; re-adopt the prostate mask grid so
// float32 header spacing cannot make two artefacts of one case disagree.
template <typename T>
Image<T> on_grid(Image<T> v, const Grid& g) {
    if (v.dims() != g.dims) throw Error(ErrorCode::GridMismatch, "artefact dims differ from the case grid");
    return Image<T>(g, std::vector<T>(v.values().begin(), v.values().end()));
}

Grid case_grid(const OutputLayout& out, const std::string& id) { return read_nifti_mask(case_dir(out, id) / "prostate.nii.gz").grid(); }

// --- input hashing ------------------------------------------------------------------

struct InputFile {
    std::string role;
    fs::path path;
};

std::vector<InputFile> case_inputs(const CaseEntry& e) {
    std::vector<InputFile> f{{"t2w", e.t2w}};
    for (const auto& d : e.dwi) f.push_back({"dwi_b" + fmt(d.b), d.path});
    if (e.adc) f.push_back({"adc", *e.adc});
    if (e.hbv) f.push_back({"hbv", *e.hbv});
    f.push_back({"prostate", e.prostate});
    f.push_back({"pz", e.pz});
    f.push_back({"tz", e.tz});
    if (e.pz_likelihood) f.push_back({"pz_likelihood", *e.pz_likelihood});
    if (e.gt_labels) f.push_back({"gt_labels", *e.gt_labels});
    if (e.t2w_ref.low_mask) f.push_back({"ref_low_mask", *e.t2w_ref.low_mask});
    if (e.t2w_ref.high_mask) f.push_back({"ref_high_mask", *e.t2w_ref.high_mask});
    return f;
}

std::string file_hash_or_missing(const fs::path& p) { return fs::exists(p) ? sha256_file(p) : std::string("missing"); }

Json inputs_json(const RunContext& ctx) {
    const fs::path base = ctx.manifest_path.has_parent_path() ? ctx.manifest_path.parent_path() : fs::path(".");
    Json arr = Json::array();
    for (const auto& e : ctx.manifest.cases) {
        Json files = Json::array();
        for (const auto& f : case_inputs(e))
            files.push_back({{"role", f.role}, {"path", f.path.lexically_relative(base).generic_string()},
                             {"sha256", file_hash_or_missing(f.path)}});
        arr.push_back({{"case_id", e.case_id}, {"files", files}});
    }
    return arr;
}

// --- stage caching ------------------------------------------------------------------

Json output_hashes(const fs::path& root, const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> files;
    if (fs::exists(dir))
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file()) files.push_back({fs::relative(e.path(), root).generic_string(), sha256_file(e.path())});
    std::sort(files.begin(), files.end());
    Json j = Json::object();
    for (const auto& [p, h] : files) j[p] = h;
    return j;
}

bool outputs_intact(const fs::path& root, const Json& recorded) {
    for (auto it = recorded.begin(); it != recorded.end(); ++it) {
        const fs::path p = root / it.key();
        if (!fs::exists(p) || sha256_file(p) != it.value().get<std::string>()) return false;
    }
    return !recorded.empty();
}

StageResult with_stage_name(StageResult r, const char* name) {
    r.stage = name;
    return r;
}

}  // namespace

// --- preprocess -----------------------------------------------------------------------

StageResult run_preprocess(const RunContext& ctx) {
    StageResult res;
    res.stage = "preprocess";
    const auto& cases = ctx.manifest.cases;
    const std::size_t n = cases.size();
    std::vector<std::optional<PreparedCase>> prepared(n);
    std::vector<std::string> errors(n);
    parallel_for(n, ctx.threads, [&](std::size_t i) {
        try {
            prepared[i] = prepare_case(load_case(cases[i]), ctx.config.preprocess);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    std::vector<const PreparedCase*> train;
    std::vector<const PreparedCase*> all;
    for (std::size_t i = 0; i < n; ++i) {
        if (!prepared[i]) {
            res.failed_cases.push_back(cases[i].case_id + ": " + errors[i]);
            say(ctx, "preprocess: case " + cases[i].case_id + " failed: " + errors[i]);
            continue;
        }
        all.push_back(&*prepared[i]);
        if (prepared[i]->split == "train") train.push_back(&*prepared[i]);
    }
    if (all.empty()) throw Error(ErrorCode::InvalidArgument, "no case could be preprocessed");
    if (train.empty()) {
        res.warnings.push_back("no train-split cases; global statistics pooled over every case");
        train = all;
    }
    const GlobalStats stats = compute_global_stats(train);
    fresh_dir(ctx.out.preprocess());
    parallel_for(n, ctx.threads, [&](std::size_t i) {
        if (!prepared[i]) return;
        normalize_diffusion(*prepared[i], stats, ctx.config.preprocess.pairing);
        write_prepared(*prepared[i], ctx);
    });
    std::vector<std::string> ids;
    std::map<std::string, std::string> split;
    for (const auto* c : all) {
        ids.push_back(c->case_id);
        split[c->case_id] = c->split;
    }
    write_index(ctx.out.preprocess() / "index.json", ctx, "prorad-preprocess-index", ids, split, res.failed_cases);
    Json s = header("prorad-stats", ctx);
    s["pairing"] = to_string(ctx.config.preprocess.pairing);
    s["training_cases"] = static_cast<std::int64_t>(train.size());
    s["adc"] = to_json(stats.adc);
    s["hbv"] = to_json(stats.hbv);
    write_json(s, ctx.out.preprocess() / "stats.json");
    say(ctx, "preprocess: " + std::to_string(all.size()) + " cases written, " + std::to_string(res.failed_cases.size()) + " failed");
    return res;
}

PreparedCase load_prepared_case(const OutputLayout& out, const std::string& id) {
    const fs::path d = case_dir(out, id);
    const Json meta = read_case_meta(out, id);
    PreparedCase c;
    c.case_id = id;
    c.split = meta.at("split").get<std::string>();
    c.ref_low = meta.at("ref_low").get<double>();
    c.ref_high = meta.at("ref_high").get<double>();
    if (!meta.at("pirads_patient").is_null()) c.pirads_patient = meta.at("pirads_patient").get<int>();
    c.gt_lesions = lesions_of(meta);
    c.prostate = read_nifti_mask(d / "prostate.nii.gz");
    const Grid& g = c.prostate.grid();
    c.pz = on_grid(read_nifti_mask(d / "pz.nii.gz"), g);
    c.t2w_norm = on_grid(read_nifti(d / "t2w_norm.nii.gz"), g);
    c.adc = on_grid(read_nifti(d / "adc.nii.gz"), g);
    c.hbv = on_grid(read_nifti(d / "hbv.nii.gz"), g);
    c.adc_norm = on_grid(read_nifti(d / "adc_norm.nii.gz"), g);
    c.hbv_norm = on_grid(read_nifti(d / "hbv_norm.nii.gz"), g);
    if (meta.value("has_pz_likelihood", false)) c.pz_likelihood = on_grid(read_nifti(d / "pz_likelihood.nii.gz"), g);
    if (meta.value("has_gt_labels", false)) c.gt_labels = on_grid(read_nifti_labels(d / "gt_labels.nii.gz"), g);
    return c;
}

// --- extract --------------------------------------------------------------------------

StageResult run_extract(const RunContext& ctx) {
    StageResult res;
    res.stage = "extract";
    const CaseIndex idx = read_index(ctx.out.preprocess() / "index.json", ctx);
    fresh_dir(ctx.out.features());
    std::vector<std::string> done;
    for (const auto& id : idx.ids) {
        try {
            const PreparedCase c = load_prepared_case(ctx.out, id);
            FeatureMatrix m = extract_case(c, ctx.config.features, ctx.threads);
            m.config_hash = ctx.config_hash;
            write_feature_binary(m, ctx.out.features() / (id + ".prfm"));
            done.push_back(id);
            say(ctx, "extract: " + id + " (" + std::to_string(m.rows()) + " voxels)");
        } catch (const Error& e) {
            res.failed_cases.push_back(id + ": " + e.what());
            say(ctx, "extract: case " + id + " failed: " + e.what());
        }
    }
    write_index(ctx.out.features() / "index.json", ctx, "prorad-feature-index", done, idx.split, res.failed_cases);
    return res;
}

// --- train / tune ---------------------------------------------------------------------

namespace {

FeatureMatrix read_features(const RunContext& ctx, const std::string& id) {
    FeatureMatrix m = read_feature_binary(ctx.out.features() / (id + ".prfm"));
    if (m.config_hash != ctx.config_hash)
        throw Error(ErrorCode::Schema, "features of " + id + " were extracted under config " + m.config_hash);
    return m;
}

Dataset training_set(const RunContext& ctx, std::vector<std::string>& warnings) {
    const CaseIndex idx = read_index(ctx.out.features() / "index.json", ctx);
    std::vector<FeatureMatrix> ms;
    for (const auto& id : idx.ids)
        if (idx.split.at(id) == "train") ms.push_back(read_features(ctx, id));
    if (ms.empty()) throw Error(ErrorCode::InvalidArgument, "no train-split cases with features");
    return assemble_training_set(ms, ctx.config.sampling, &warnings);
}

Json tune_report(const TuneResult& t, const RunContext& ctx) {
    Json j = header("prorad-tune", ctx);
    j["seed"] = derive_seed(ctx.config.seed, "tune");
    j["best_trial"] = t.best_trial;
    j["best"] = to_json(t.best);
    Json trials = Json::array();
    for (const auto& r : t.trials)
        trials.push_back({{"config", to_json(r.config)}, {"mean_logloss", r.mean_logloss}, {"sd_logloss", r.sd_logloss},
                          {"mean_rounds", r.mean_rounds}});
    j["trials"] = trials;
    return j;
}

TuneResult tune_on(const Dataset& data, const RunContext& ctx) {
    return tune(data, ctx.config.search, ctx.config.tune_trials, derive_seed(ctx.config.seed, "tune"), ctx.config.train,
                ctx.config.cv_folds, ctx.threads);
}

GlobalStats read_stats(const RunContext& ctx) {
    const Json s = read_json(ctx.out.preprocess() / "stats.json");
    require_hash(s, ctx, "stats.json");
    return {stats_from_json(s.at("adc")), stats_from_json(s.at("hbv"))};
}

}  // namespace

StageResult run_tune(const RunContext& ctx) {
    StageResult res;
    res.stage = "tune";
    const Dataset data = training_set(ctx, res.warnings);
    const TuneResult t = tune_on(data, ctx);
    fresh_dir(ctx.out.tune());
    write_json(tune_report(t, ctx), ctx.out.tune() / "tune_report.json");
    say(ctx, "tune: best trial " + std::to_string(t.best_trial) + " mean log-loss " + fmt(t.trials[t.best_trial].mean_logloss));
    return res;
}

StageResult run_train(const RunContext& ctx) {
    StageResult res;
    res.stage = "train";
    const Dataset data = training_set(ctx, res.warnings);
    fresh_dir(ctx.out.model_dir());
    TrainConfig cfg = ctx.config.train;
    if (ctx.config.tune) {
        const TuneResult t = tune_on(data, ctx);
        write_json(tune_report(t, ctx), ctx.out.model_dir() / "tune_report.json");
        cfg = t.best;
    }
    const CvResult cv = cross_validate(data, cfg, ctx.config.cv_folds, ctx.threads);
    TrainConfig final_cfg = cfg;
    if (!ctx.config.tune && cfg.early_stopping_rounds > 0) {
        // No validation set for the final fit: use the mean early-stopped fold length.
        const double mr = std::accumulate(cv.fold_rounds.begin(), cv.fold_rounds.end(), 0.0) / cv.fold_rounds.size();
        final_cfg.num_rounds = std::max(1, static_cast<int>(std::lround(mr)));
    }
    std::vector<int> labels(data.y.begin(), data.y.end());
    const double youden = ctx.config.voxel_youden_t ? *ctx.config.voxel_youden_t : youden_threshold(cv.oof_probability, labels);

    ModelBundle b;
    b.ensemble = train(data, final_cfg, nullptr, nullptr, ctx.threads);
    b.config_hash = ctx.config_hash;
    b.train_config = final_cfg;
    b.sampling = ctx.config.sampling;
    b.feature_spec = ctx.config.features;
    b.preprocess = ctx.config.preprocess;
    b.stats = read_stats(ctx);
    b.thresholds = {youden, ctx.config.lesion_decision_t};
    b.thresholds.validate();
    save_model(b, ctx.out.model());

    Json r = header("prorad-training-report", ctx);
    r["rows"] = data.rows();
    r["positive_rows"] = std::count(data.y.begin(), data.y.end(), 1.0);
    r["warnings"] = res.warnings;
    r["train_config"] = to_json(final_cfg);
    Json cvj;
    cvj["folds"] = ctx.config.cv_folds;
    cvj["fold_logloss"] = cv.fold_logloss;
    Json aucs = Json::array();
    for (double a : cv.fold_auroc) aucs.push_back(std::isfinite(a) ? Json(a) : Json(nullptr));
    cvj["fold_auroc"] = aucs;
    cvj["fold_rounds"] = cv.fold_rounds;
    cvj["mean_logloss"] = cv.mean_logloss;
    cvj["sd_logloss"] = cv.sd_logloss;
    Json assign = Json::array();
    for (std::size_t i = 0; i < cv.folds.patients.size(); ++i)
        assign.push_back({{"case_id", cv.folds.patients[i]}, {"fold", cv.folds.fold[i]}});
    cvj["assignment"] = assign;
    r["cross_validation"] = cvj;
    r["oof_auroc"] = auroc(cv.oof_probability, labels);
    r["voxel_youden_t"] = youden;
    r["voxel_youden_source"] = ctx.config.voxel_youden_t ? "config" : "out_of_fold";
    r["trees"] = b.ensemble.trees.size();
    write_json(r, ctx.out.model_dir() / "training_report.json");
    say(ctx, "train: " + std::to_string(b.ensemble.trees.size()) + " trees, CV log-loss " + fmt(cv.mean_logloss) +
                 ", voxel threshold " + fmt(youden));
    return res;
}

// --- predict / detect -----------------------------------------------------------------

namespace {

ModelBundle model_for(const RunContext& ctx) {
    const fs::path p = ctx.model_path ? *ctx.model_path : ctx.out.model();
    if (!fs::exists(p)) throw Error(ErrorCode::IoFailure, "model bundle not found at " + p.string());
    ModelBundle b = load_model(p);
    if (b.config_hash != ctx.config_hash)
        throw Error(ErrorCode::Schema, "model was trained under config " + b.config_hash + ", current config is " + ctx.config_hash);
    return b;
}

}  // namespace

StageResult run_predict(const RunContext& ctx) {
    StageResult res;
    res.stage = "predict";
    const ModelBundle b = model_for(ctx);
    const CaseIndex idx = read_index(ctx.out.features() / "index.json", ctx);
    fresh_dir(ctx.out.tpmaps());
    std::vector<std::string> done;
    for (const auto& id : idx.ids) {
        try {
            const FeatureMatrix m = read_features(ctx, id);
            const auto p = b.ensemble.predict_proba(m.values, kFeatureCount, ctx.threads);
            const Volume3D tp = tpmap_from_predictions(case_grid(ctx.out, id), m.voxel_index, p);
            write_nifti(tp, ctx.out.tpmaps() / (id + ".nii.gz"), NiftiType::F64, descrip(ctx));
            done.push_back(id);
        } catch (const Error& e) {
            res.failed_cases.push_back(id + ": " + e.what());
        }
    }
    write_index(ctx.out.tpmaps() / "index.json", ctx, "prorad-tpmap-index", done, idx.split, res.failed_cases);
    say(ctx, "predict: " + std::to_string(done.size()) + " probability maps");
    return res;
}

StageResult run_detect(const RunContext& ctx) {
    StageResult res;
    res.stage = "detect";
    const ModelBundle b = model_for(ctx);
    const OperatingThresholds th{b.thresholds.voxel_youden_t, ctx.config.lesion_decision_t};
    const CaseIndex idx = read_index(ctx.out.tpmaps() / "index.json", ctx);
    fresh_dir(ctx.out.detections());
    std::vector<std::string> done;
    for (const auto& id : idx.ids) {
        try {
            const Volume3D tp = on_grid(read_nifti(ctx.out.tpmaps() / (id + ".nii.gz")), case_grid(ctx.out, id));
            const DetectionMap dm = build_detection_map(tp, th, ctx.config.connectivity, ctx.config.max_lesions);
            write_nifti(dm.labels, ctx.out.detections() / (id + ".nii.gz"), descrip(ctx));
            Json j = header("prorad-detections", ctx);
            j["case_id"] = id;
            Json les = Json::array();
            for (const auto& l : dm.lesions)
                les.push_back({{"id", l.id}, {"size_voxels", l.voxel_count}, {"score", l.score}, {"peak_index", l.peak_index}});
            j["lesions"] = les;
            j["patient_score"] = patient_score(dm);
            j["thresholds"] = {{"voxel_youden_t", th.voxel_youden_t}, {"lesion_decision_t", th.lesion_decision_t}};
            j["connectivity"] = ctx.config.connectivity;
            write_json(j, ctx.out.detections() / (id + ".json"));
            done.push_back(id);
        } catch (const Error& e) {
            res.failed_cases.push_back(id + ": " + e.what());
        }
    }
    write_index(ctx.out.detections() / "index.json", ctx, "prorad-detection-index", done, idx.split, res.failed_cases);
    say(ctx, "detect: " + std::to_string(done.size()) + " detection maps");
    return res;
}

// --- evaluate -------------------------------------------------------------------------

namespace {

struct CaseEval {
    std::string id;
    int label = 0;
    double score = 0.0;
    std::optional<int> pirads;
    std::vector<PredictedLesion> preds;
    LesionMatchResult match;
    int num_gt = 0;
};

Json op_json(const OperatingPoint& o) {
    Json j;
    j["threshold"] = o.threshold;
    j["tp"] = o.tp;
    j["fn"] = o.fn;
    j["tn"] = o.tn;
    j["fp"] = o.fp;
    j["sensitivity"] = o.sensitivity;
    j["sensitivity_fraction"] = fraction(o.tp, o.tp + o.fn);
    j["specificity"] = o.specificity;
    j["specificity_fraction"] = fraction(o.tn, o.tn + o.fp);
    j["precision"] = o.precision;
    j["precision_fraction"] = fraction(o.tp, o.tp + o.fp);
    return j;
}

Json ci_json(const AucInterval& a) { return {{"auroc", a.auc}, {"se", a.se}, {"ci95_lo", a.lo}, {"ci95_hi", a.hi}}; }

std::string csv_header(const RunContext& ctx, const std::string& columns) { return "# config_hash=" + ctx.config_hash + "\n" + columns + "\n"; }

}  // namespace

StageResult run_evaluate(const RunContext& ctx) {
    StageResult res;
    res.stage = "evaluate";
    const CaseIndex idx = read_index(ctx.out.detections() / "index.json", ctx);
    const auto ids = evaluation_cases(idx, &res.warnings);
    const double decision_t = ctx.config.lesion_decision_t;

    std::vector<CaseEval> evals;
    for (const auto& id : ids) {
        const Json side = read_json(ctx.out.detections() / (id + ".json"));
        require_hash(side, ctx, "detections of " + id);
        const Json meta = read_case_meta(ctx.out, id);
        require_hash(meta, ctx, "preprocessed case " + id);
        const Grid g = case_grid(ctx.out, id);
        CaseEval e;
        e.id = id;
        e.score = side.at("patient_score").get<double>();
        if (!meta.at("pirads_patient").is_null()) e.pirads = meta.at("pirads_patient").get<int>();
        std::vector<int> gt_ids;
        for (const auto& l : lesions_of(meta))
            if (l.grade_group >= 2) gt_ids.push_back(l.label);
        e.label = gt_ids.empty() ? 0 : 1;
        e.num_gt = static_cast<int>(gt_ids.size());
        for (const auto& l : side.at("lesions")) e.preds.push_back({l.at("id").get<int>(), l.at("score").get<double>()});
        const LabelVolume pred = on_grid(read_nifti_labels(ctx.out.detections() / (id + ".nii.gz")), g);
        const LabelVolume gt = meta.value("has_gt_labels", false)
                                   ? on_grid(read_nifti_labels(case_dir(ctx.out, id) / "gt_labels.nii.gz"), g)
                                   : LabelVolume(g, 0);
        e.match = match_lesions(pred, e.preds, gt, gt_ids);
        evals.push_back(std::move(e));
    }

    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<CaseDetections> dets;
    for (const auto& e : evals) {
        scores.push_back(e.score);
        labels.push_back(e.label);
        CaseDetections cd;
        cd.num_gt = e.num_gt;
        std::set<int> hit_ids;
        for (const auto& h : e.match.hits) hit_ids.insert(h.pred_id);
        for (const auto& p : e.preds) cd.detections.push_back({p.score, hit_ids.count(p.id) > 0});
        dets.push_back(std::move(cd));
    }
    const std::int64_t npos = std::count(labels.begin(), labels.end(), 1);
    const bool both = npos > 0 && npos < static_cast<std::int64_t>(labels.size());

    Json m = header("prorad-metrics", ctx);
    m["cases"] = evals.size();
    m["positive_cases"] = npos;
    m["negative_cases"] = static_cast<std::int64_t>(evals.size()) - npos;
    m["lesion_decision_t"] = decision_t;

    std::string roc_csv = csv_header(ctx, "scorer,threshold,fpr,tpr");
    std::vector<Series> roc_series;
    Json patient;
    if (both) {
        patient = ci_json(auc_with_ci(scores, labels));
        const RocCurve rc = roc_curve(scores, labels);
        Json pts = Json::array();
        for (std::size_t i = 0; i < rc.fpr.size(); ++i) {
            pts.push_back({{"threshold", std::isfinite(rc.thresholds[i]) ? Json(rc.thresholds[i]) : Json("inf")},
                           {"fpr", rc.fpr[i]}, {"tpr", rc.tpr[i]}});
            roc_csv += "model," + fmt(rc.thresholds[i]) + "," + fmt(rc.fpr[i]) + "," + fmt(rc.tpr[i]) + "\n";
        }
        patient["roc"] = pts;
        roc_series.push_back({"model", rc.fpr, rc.tpr});
        patient["operating_point"] = op_json(operating_point(scores, labels, decision_t));
    } else {
        res.warnings.push_back("patient-level metrics need both classes among evaluated cases");
        patient = nullptr;
    }
    m["patient"] = patient;

    const bool have_pirads =
        both && std::all_of(evals.begin(), evals.end(), [](const CaseEval& e) { return e.pirads.has_value(); });
    if (have_pirads) {
        std::vector<double> pr;
        for (const auto& e : evals) pr.push_back(*e.pirads);
        const DelongResult d = delong_compare(scores, pr, labels);
        Json pj;
        pj["roc"] = ci_json(d.b);
        pj["delong"] = {{"auroc_model", d.a.auc}, {"auroc_pirads", d.b.auc}, {"z", std::isfinite(d.z) ? Json(d.z) : Json(nullptr)},
                        {"p_value", d.p_value}};
        pj["operating_points"] = Json::array();
        for (int cut : {3, 4}) {
            Json o = op_json(operating_point(pr, labels, cut));
            o["name"] = "PI-RADS >= " + std::to_string(cut);
            pj["operating_points"].push_back(o);
        }
        const RocCurve rc = roc_curve(pr, labels);
        for (std::size_t i = 0; i < rc.fpr.size(); ++i)
            roc_csv += "pirads," + fmt(rc.thresholds[i]) + "," + fmt(rc.fpr[i]) + "," + fmt(rc.tpr[i]) + "\n";
        roc_series.push_back({"PI-RADS", rc.fpr, rc.tpr});
        m["pirads"] = pj;
    } else {
        m["pirads"] = nullptr;
    }

    const FrocCurve fc = froc(dets);
    Json lesion;
    lesion["total_gt"] = fc.total_gt;
    std::string froc_csv = csv_header(ctx, "threshold,fp_per_case,sensitivity,hits,false_positives");
    Json fpts = Json::array();
    std::vector<double> fx, fy;
    for (const auto& p : fc.points) {
        fpts.push_back({{"threshold", std::isfinite(p.threshold) ? Json(p.threshold) : Json("inf")},
                        {"fp_per_case", p.fp_per_case}, {"sensitivity", p.sensitivity}, {"hits", p.hits},
                        {"false_positives", p.false_positives}});
        froc_csv += fmt(p.threshold) + "," + fmt(p.fp_per_case) + "," + fmt(p.sensitivity) + "," + std::to_string(p.hits) + "," +
                    std::to_string(p.false_positives) + "\n";
        fx.push_back(p.fp_per_case);
        fy.push_back(p.sensitivity);
    }
    lesion["froc"] = fpts;
    Json at_fp;
    for (double r : {0.1, 0.2, 0.5, 1.0, 2.0}) at_fp[short_num(r)] = sensitivity_at_fp(fc, r);
    lesion["sensitivity_at_fp"] = at_fp;
    // Table-style lesion point: every detection scored at or above the decision threshold.
    std::int64_t hits = 0, fps = 0;
    for (const auto& c : dets)
        for (const auto& d : c.detections)
            if (d.score >= decision_t) (d.hit ? hits : fps) += 1;
    lesion["operating_point"] = {{"threshold", decision_t},
                                 {"hits", hits},
                                 {"sensitivity", fc.total_gt ? static_cast<double>(hits) / fc.total_gt : 0.0},
                                 {"sensitivity_fraction", fraction(hits, fc.total_gt)},
                                 {"false_positives", fps},
                                 {"fp_per_case", static_cast<double>(fps) / static_cast<double>(fc.cases)},
                                 {"fp_fraction", fraction(fps, fc.cases)}};
    std::string pr_csv = csv_header(ctx, "threshold,recall,precision");
    std::vector<double> rx, ry;
    if (fc.total_gt > 0) {
        std::vector<PrPoint> curve;
        lesion["average_precision"] = average_precision(dets, fc.total_gt, &curve);
        Json pp = Json::array();
        for (const auto& p : curve) {
            pp.push_back({{"threshold", p.threshold}, {"recall", p.recall}, {"precision", p.precision}});
            pr_csv += fmt(p.threshold) + "," + fmt(p.recall) + "," + fmt(p.precision) + "\n";
            rx.push_back(p.recall);
            ry.push_back(p.precision);
        }
        lesion["pr"] = pp;
    } else {
        lesion["average_precision"] = nullptr;
        res.warnings.push_back("no csPCa lesions among evaluated cases; AP undefined");
    }
    m["lesion"] = lesion;

    Json per = Json::array();
    for (const auto& e : evals) {
        Json c;
        c["case_id"] = e.id;
        c["label"] = e.label;
        c["patient_score"] = e.score;
        c["pirads"] = e.pirads ? Json(*e.pirads) : Json(nullptr);
        Json les = Json::array();
        for (const auto& p : e.preds) {
            Json l{{"id", p.id}, {"score", p.score}, {"hit", false}};
            for (const auto& h : e.match.hits)
                if (h.pred_id == p.id) l = {{"id", p.id}, {"score", p.score}, {"hit", true}, {"gt_id", h.gt_id}, {"iou", h.iou}};
            les.push_back(l);
        }
        c["lesions"] = les;
        c["missed_gt"] = e.match.missed;
        per.push_back(c);
    }
    m["per_case"] = per;
    m["warnings"] = res.warnings;

    fresh_dir(ctx.out.evaluation());
    const fs::path ev = ctx.out.evaluation();
    write_json(m, ev / "metrics.json");
    write_text(roc_csv, (ev / "roc.csv").string());
    write_text(froc_csv, (ev / "froc.csv").string());
    write_text(pr_csv, (ev / "pr.csv").string());
    const std::string note = "config_hash=" + ctx.config_hash;
    write_text(line_chart_svg("Patient-level ROC", "1 - specificity", "sensitivity", roc_series, 1, 1, note), (ev / "roc.svg").string());
    double fmax = 1;
    for (double v : fx) fmax = std::max(fmax, v);
    write_text(line_chart_svg("Lesion-level FROC", "false positives per case", "sensitivity", {{"model", fx, fy}}, fmax, 1, note),
               (ev / "froc.svg").string());
    write_text(line_chart_svg("Precision-recall", "recall", "precision", {{"model", rx, ry}}, 1, 1, note), (ev / "pr.svg").string());
    std::string ops = csv_header(ctx, "scorer,threshold,tp,fn,tn,fp,sensitivity,specificity,precision");
    auto op_row = [&](const std::string& name, const OperatingPoint& o) {
        ops += name + "," + fmt(o.threshold) + "," + std::to_string(o.tp) + "," + std::to_string(o.fn) + "," + std::to_string(o.tn) + "," +
               std::to_string(o.fp) + "," + fmt(o.sensitivity) + "," + fmt(o.specificity) + "," + fmt(o.precision) + "\n";
    };
    if (both) op_row("model", operating_point(scores, labels, decision_t));
    if (have_pirads) {
        std::vector<double> pr;
        for (const auto& e : evals) pr.push_back(*e.pirads);
        op_row("pirads>=3", operating_point(pr, labels, 3));
        op_row("pirads>=4", operating_point(pr, labels, 4));
    }
    write_text(ops, (ev / "operating_points.csv").string());
    say(ctx, "evaluate: " + std::to_string(evals.size()) + " cases" +
                 (both ? ", patient AUROC " + fmt(patient["auroc"].get<double>()) : std::string()) + ", sensitivity at 0.2 FP/case " +
                 fmt(sensitivity_at_fp(fc, 0.2)));
    return res;
}

// --- explain --------------------------------------------------------------------------

StageResult run_explain(const RunContext& ctx) {
    StageResult res;
    res.stage = "explain";
    const ModelBundle b = model_for(ctx);
    const CaseIndex idx = read_index(ctx.out.detections() / "index.json", ctx);
    const auto ids = evaluation_cases(idx, &res.warnings);
    fresh_dir(ctx.out.explanations());
    const auto& names = b.ensemble.feature_names;
    Json index = header("prorad-explanation-index", ctx);
    index["aggregation"] = to_string(ctx.config.shap_aggregation);
    Json entries = Json::array();
    for (const auto& id : ids) {
        const Json side = read_json(ctx.out.detections() / (id + ".json"));
        require_hash(side, ctx, "detections of " + id);
        if (side.at("lesions").empty()) continue;
        const FeatureMatrix m = read_features(ctx, id);
        const LabelVolume dm = read_nifti_labels(ctx.out.detections() / (id + ".nii.gz"));
        std::map<std::int64_t, std::size_t> row_of;
        for (std::size_t r = 0; r < m.rows(); ++r) row_of[m.voxel_index[r]] = r;
        for (const auto& l : side.at("lesions")) {
            const int lid = l.at("id").get<int>();
            std::vector<double> rows;
            for (std::size_t v = 0; v < dm.size(); ++v) {
                if (dm[v] != lid) continue;
                const auto it = row_of.find(static_cast<std::int64_t>(v));
                if (it == row_of.end()) continue;
                const auto row = m.row(it->second);
                rows.insert(rows.end(), row.begin(), row.end());
            }
            const LesionExplanation e =
                explain_lesion(b.ensemble, lid, rows, ctx.config.shap_top_k, ctx.config.shap_aggregation, ctx.threads);
            const std::string stem = id + "_lesion" + std::to_string(lid);
            Json j = header("prorad-explanation", ctx);
            j["case_id"] = id;
            j["lesion_id"] = lid;
            j["voxels"] = e.voxels;
            j["aggregation"] = to_string(e.aggregation);
            j["base_margin"] = e.base;
            j["mean_margin"] = e.mean_margin;
            Json top = Json::array();
            std::vector<std::string> labels;
            std::vector<double> vals;
            for (std::size_t k = 0; k < e.top.size(); ++k) {
                const int f = e.top[k];
                top.push_back({{"rank", k + 1}, {"feature", names[f]}, {"phi", e.phi[f]}, {"abs_phi", e.abs_phi[f]}});
                labels.push_back(names[f]);
                vals.push_back(e.phi[f]);
            }
            j["top_features"] = top;
            write_json(j, ctx.out.explanations() / (stem + ".json"));
            std::string csv = csv_header(ctx, "feature,phi,abs_phi");
            for (std::size_t f = 0; f < names.size(); ++f) csv += names[f] + "," + fmt(e.phi[f]) + "," + fmt(e.abs_phi[f]) + "\n";
            write_text(csv, (ctx.out.explanations() / (stem + ".csv")).string());
            write_text(bar_chart_svg("SHAP, case " + id + " lesion " + std::to_string(lid), labels, vals, "config_hash=" + ctx.config_hash),
                       (ctx.out.explanations() / (stem + ".svg")).string());
            entries.push_back({{"case_id", id}, {"lesion_id", lid}, {"file", stem + ".json"}});
        }
    }
    index["explanations"] = entries;
    write_json(index, ctx.out.explanations() / "index.json");
    say(ctx, "explain: " + std::to_string(entries.size()) + " lesion explanations");
    return res;
}

// --- run-all --------------------------------------------------------------------------

void write_provenance(const RunContext& ctx) {
    Json p = header("prorad-provenance", ctx);
    p["config"] = to_json(ctx.config);
    p["seeds"] = {{"master", ctx.config.seed},
                  {"sampling", ctx.config.sampling.seed},
                  {"train", ctx.config.train.seed},
                  {"tune", derive_seed(ctx.config.seed, "tune")}};
    p["manifest"] = {{"file", ctx.manifest_path.filename().generic_string()}, {"sha256", file_hash_or_missing(ctx.manifest_path)}};
    p["inputs"] = inputs_json(ctx);
    write_json(p, ctx.out.provenance());
}

std::vector<StageResult> run_all(const RunContext& ctx) {
    struct Stage {
        const char* name;
        StageResult (*fn)(const RunContext&);
        fs::path dir;
    };
    RunContext c = ctx;
    c.model_path.reset();
    const std::vector<Stage> stages{{"preprocess", run_preprocess, c.out.preprocess()}, {"extract", run_extract, c.out.features()},
                                    {"train", run_train, c.out.model_dir()},           {"predict", run_predict, c.out.tpmaps()},
                                    {"detect", run_detect, c.out.detections()},        {"evaluate", run_evaluate, c.out.evaluation()},
                                    {"explain", run_explain, c.out.explanations()}};
    fs::create_directories(c.out.root);
    write_provenance(c);
    std::string key = sha256_hex(std::string("inputs:") + c.config_hash + read_json(c.out.provenance()).dump());
    bool rerun_rest = false;
    std::vector<StageResult> results;
    for (const auto& s : stages) {
        key = sha256_hex(std::string(s.name) + ":" + key);
        const fs::path rec_path = c.out.cache() / (std::string(s.name) + ".json");
        bool hit = false;
        Json rec;
        if (!rerun_rest && fs::exists(rec_path)) {
            try {
                rec = read_json(rec_path);
                hit = rec.value("key", std::string()) == key && outputs_intact(c.out.root, rec.at("outputs"));
            } catch (const std::exception&) {
                hit = false;
            }
        }
        StageResult r;
        if (hit) {
            r.stage = s.name;
            r.cached = true;
            for (const auto& f : rec.value("failed_cases", Json::array())) r.failed_cases.push_back(f.get<std::string>());
            say(c, std::string(s.name) + ": up to date");
        } else {
            rerun_rest = true;
            try {
                r = with_stage_name(s.fn(c), s.name);
            } catch (const Error& e) {
                fs::remove(rec_path);
                throw StageError(s.name, e);
            }
            rec = Json::object();
            rec["stage"] = s.name;
            rec["key"] = key;
            rec["failed_cases"] = r.failed_cases;
            rec["outputs"] = output_hashes(c.out.root, s.dir);
            write_json(rec, rec_path);
        }
        // Downstream keys cover this stage's outputs, so edits to them propagate.
        key = sha256_hex(key + rec.at("outputs").dump());
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace prorad
