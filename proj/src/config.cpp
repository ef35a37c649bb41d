#include "prorad/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "prorad/error.hpp"
#include "prorad/hash.hpp"

namespace prorad {

namespace {

void check_object(const Json& j, const char* where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw Error(ErrorCode::Config, std::string(where) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) throw Error(ErrorCode::Config, std::string("unknown key '") + it.key() + "' in " + where);
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const char* where) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) throw Error(ErrorCode::Config, "");
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_integer()) throw Error(ErrorCode::Config, "");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw Error(ErrorCode::Config, "");
        }
        out = it->template get<T>();
    } catch (const std::exception&) {
        throw Error(ErrorCode::Config, std::string(where) + "." + key + " has the wrong type");
    }
}

std::string read_string(const Json& j, const char* key, const std::string& def, const char* where) {
    std::string s = def;
    const auto it = j.find(key);
    if (it == j.end()) return s;
    if (!it->is_string()) throw Error(ErrorCode::Config, std::string(where) + "." + key + " must be a string");
    return it->get<std::string>();
}

const char* to_string(Interpolation m) { return m == Interpolation::Linear ? "linear" : "nearest"; }
Interpolation interpolation_from_string(const std::string& s) {
    if (s == "linear") return Interpolation::Linear;
    if (s == "nearest") return Interpolation::Nearest;
    throw Error(ErrorCode::Config, "unknown interpolation '" + s + "'");
}

const char* to_string(Discretization d) { return d == Discretization::PerWindow ? "per_window" : "per_image"; }
Discretization discretization_from_string(const std::string& s) {
    if (s == "per_window") return Discretization::PerWindow;
    if (s == "per_image") return Discretization::PerImage;
    throw Error(ErrorCode::Config, "unknown discretization '" + s + "'");
}

}  // namespace

Json to_json(const PreprocessConfig& c) {
    Json j;
    j["inplane_spacing_mm"] = c.inplane_spacing;
    j["t2w_interpolation"] = to_string(c.t2w_interpolation);
    j["adc_b_min"] = c.adc_b_min;
    j["adc_b_max"] = c.adc_b_max;
    j["hbv_b"] = c.hbv_b;
    j["normalization_pairing"] = to_string(c.pairing);
    return j;
}

PreprocessConfig preprocess_config_from_json(const Json& j) {
    constexpr const char* w = "preprocess";
    check_object(j, w, {"inplane_spacing_mm", "t2w_interpolation", "adc_b_min", "adc_b_max", "hbv_b", "normalization_pairing"});
    PreprocessConfig c;
    read(j, "inplane_spacing_mm", c.inplane_spacing, w);
    c.t2w_interpolation = interpolation_from_string(read_string(j, "t2w_interpolation", to_string(c.t2w_interpolation), w));
    read(j, "adc_b_min", c.adc_b_min, w);
    read(j, "adc_b_max", c.adc_b_max, w);
    read(j, "hbv_b", c.hbv_b, w);
    try {
        c.pairing = pairing_from_string(read_string(j, "normalization_pairing", to_string(c.pairing), w));
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, e.what());
    }
    return c;
}

Json to_json(const FeatureSpec& s) {
    Json j;
    j["bin_width"] = s.bin_width;
    j["kernel_radius"] = s.kernel_radius;
    j["intensity_scale"] = s.intensity_scale;
    j["discretization"] = to_string(s.discretization);
    j["pzl_sigma_mm"] = s.pzl_sigma_mm;
    j["format_version"] = kFeatureFormatVersion;
    return j;
}

FeatureSpec feature_spec_from_json(const Json& j) {
    constexpr const char* w = "features";
    check_object(j, w, {"bin_width", "kernel_radius", "intensity_scale", "discretization", "pzl_sigma_mm", "format_version"});
    FeatureSpec s;
    read(j, "bin_width", s.bin_width, w);
    read(j, "kernel_radius", s.kernel_radius, w);
    read(j, "intensity_scale", s.intensity_scale, w);
    s.discretization = discretization_from_string(read_string(j, "discretization", to_string(s.discretization), w));
    read(j, "pzl_sigma_mm", s.pzl_sigma_mm, w);
    int version = kFeatureFormatVersion;
    read(j, "format_version", version, w);
    if (version != kFeatureFormatVersion)
        throw Error(ErrorCode::Config, "feature format version " + std::to_string(version) + " is not supported");
    try {
        s.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, e.what());
    }
    return s;
}

Json to_json(const SamplingPolicy& s) {
    Json j;
    j["negative_rule"] = to_string(s.rule);
    j["fixed_n"] = s.fixed_n;
    j["seed"] = s.seed;
    return j;
}

SamplingPolicy sampling_from_json(const Json& j) {
    constexpr const char* w = "sampling";
    check_object(j, w, {"negative_rule", "fixed_n", "seed"});
    SamplingPolicy s;
    s.rule = negative_rule_from_string(read_string(j, "negative_rule", to_string(s.rule), w));
    read(j, "fixed_n", s.fixed_n, w);
    read(j, "seed", s.seed, w);
    return s;
}

Json to_json(const TrainConfig& c) {
    Json j;
    j["max_depth"] = c.max_depth;
    j["num_rounds"] = c.num_rounds;
    j["learning_rate"] = c.learning_rate;
    j["min_child_weight"] = c.min_child_weight;
    j["l2_lambda"] = c.l2_lambda;
    j["gamma"] = c.gamma;
    j["subsample"] = c.subsample;
    j["colsample"] = c.colsample;
    j["early_stopping_rounds"] = c.early_stopping_rounds;
    j["seed"] = c.seed;
    return j;
}

TrainConfig train_config_from_json(const Json& j) {
    constexpr const char* w = "train";
    check_object(j, w, {"max_depth", "num_rounds", "learning_rate", "min_child_weight", "l2_lambda", "gamma", "subsample",
                        "colsample", "early_stopping_rounds", "seed"});
    TrainConfig c;
    read(j, "max_depth", c.max_depth, w);
    read(j, "num_rounds", c.num_rounds, w);
    read(j, "learning_rate", c.learning_rate, w);
    read(j, "min_child_weight", c.min_child_weight, w);
    read(j, "l2_lambda", c.l2_lambda, w);
    read(j, "gamma", c.gamma, w);
    read(j, "subsample", c.subsample, w);
    read(j, "colsample", c.colsample, w);
    read(j, "early_stopping_rounds", c.early_stopping_rounds, w);
    read(j, "seed", c.seed, w);
    c.validate();
    return c;
}

Json to_json(const SearchSpace& s) {
    Json j;
    j["max_depth"] = {s.depth_min, s.depth_max};
    j["learning_rate"] = {s.eta_min, s.eta_max};
    j["max_rounds"] = s.max_rounds;
    j["min_child_weight"] = {s.mcw_min, s.mcw_max};
    j["l2_lambda"] = {s.lambda_min, s.lambda_max};
    j["gamma"] = {s.gamma_min, s.gamma_max};
    j["subsample"] = {s.subsample_min, s.subsample_max};
    j["colsample"] = {s.colsample_min, s.colsample_max};
    return j;
}

SearchSpace search_space_from_json(const Json& j) {
    constexpr const char* w = "search";
    check_object(j, w, {"max_depth", "learning_rate", "max_rounds", "min_child_weight", "l2_lambda", "gamma", "subsample", "colsample"});
    SearchSpace s;
    auto range = [&](const char* key, auto& lo, auto& hi) {
        const auto it = j.find(key);
        if (it == j.end()) return;
        if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
            throw Error(ErrorCode::Config, std::string("search.") + key + " must be a [lo, hi] pair");
        lo = (*it)[0].get<std::decay_t<decltype(lo)>>();
        hi = (*it)[1].get<std::decay_t<decltype(hi)>>();
        if (lo > hi) throw Error(ErrorCode::Config, std::string("search.") + key + " has lo > hi");
    };
    range("max_depth", s.depth_min, s.depth_max);
    range("learning_rate", s.eta_min, s.eta_max);
    read(j, "max_rounds", s.max_rounds, w);
    range("min_child_weight", s.mcw_min, s.mcw_max);
    range("l2_lambda", s.lambda_min, s.lambda_max);
    range("gamma", s.gamma_min, s.gamma_max);
    range("subsample", s.subsample_min, s.subsample_max);
    range("colsample", s.colsample_min, s.colsample_max);
    if (s.depth_min < 1 || s.eta_min <= 0 || s.lambda_min <= 0 || s.subsample_min <= 0 || s.colsample_min <= 0 ||
        s.subsample_max > 1 || s.colsample_max > 1 || s.max_rounds < 1)
        throw Error(ErrorCode::Config, "search space bounds out of range");
    return s;
}

Json to_json(const NormalizationStats& s) {
    Json j;
    j["channel"] = to_string(s.channel);
    j["scope"] = to_string(s.scope);
    j["mean"] = s.mean;
    j["std"] = s.std;
    return j;
}

NormalizationStats stats_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("mean") || !j.contains("std") || !j.contains("channel") || !j.contains("scope") ||
        !j["mean"].is_number() || !j["std"].is_number() || !j["channel"].is_string() || !j["scope"].is_string())
        throw Error(ErrorCode::Schema, "normalization stats need channel, scope, mean and std");
    NormalizationStats s;
    s.mean = j["mean"].get<double>();
    s.std = j["std"].get<double>();
    s.channel = channel_from_string(j["channel"].get<std::string>());
    s.scope = stats_scope_from_string(j["scope"].get<std::string>());
    return s;
}

void PipelineConfig::validate() const {
    features.validate();
    train.validate();
    if (cv_folds < 2) throw Error(ErrorCode::Config, "cv_folds must be >= 2");
    if (tune && tune_trials < 1) throw Error(ErrorCode::Config, "tune_trials must be >= 1");
    if (voxel_youden_t && !(*voxel_youden_t > 0 && *voxel_youden_t < 1))
        throw Error(ErrorCode::Config, "voxel_youden_t must lie in (0, 1)");
    if (!(lesion_decision_t > 0 && lesion_decision_t < 1)) throw Error(ErrorCode::Config, "lesion_decision_t must lie in (0, 1)");
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw Error(ErrorCode::Config, "connectivity must be 6, 18 or 26");
    if (max_lesions < 1) throw Error(ErrorCode::Config, "max_lesions must be >= 1");
    if (shap_top_k < 1) throw Error(ErrorCode::Config, "shap_top_k must be >= 1");
    if (!(preprocess.inplane_spacing > 0)) throw Error(ErrorCode::Config, "inplane_spacing_mm must be positive");
    if (!(preprocess.adc_b_min < preprocess.adc_b_max)) throw Error(ErrorCode::Config, "adc_b_min must be below adc_b_max");
}

void PipelineConfig::apply_seed(std::uint64_t s) {
    seed = s;
    sampling.seed = derive_seed(s, "sampling");
    train.seed = derive_seed(s, "train");
}

PipelineConfig config_from_json(const Json& j) {
    constexpr const char* w = "config";
    check_object(j, w, {"format", "version", "seed", "threads", "preprocess", "features", "sampling", "train", "tune",
                        "tune_trials", "search", "cv_folds", "thresholds", "detection", "explain"});
    if (j.contains("format") && j["format"] != "prorad-config") throw Error(ErrorCode::Config, "not a prorad config");
    int version = kConfigVersion;
    read(j, "version", version, w);
    if (version != kConfigVersion) throw Error(ErrorCode::Config, "config version " + std::to_string(version) + " is not supported");
    PipelineConfig c;
    std::uint64_t seed = c.seed;
    read(j, "seed", seed, w);
    c.apply_seed(seed);
    read(j, "threads", c.threads, w);
    if (j.contains("preprocess")) c.preprocess = preprocess_config_from_json(j["preprocess"]);
    if (j.contains("features")) c.features = feature_spec_from_json(j["features"]);
    if (j.contains("sampling")) {
        const SamplingPolicy derived = c.sampling;
        c.sampling = sampling_from_json(j["sampling"]);
        if (!j["sampling"].contains("seed")) c.sampling.seed = derived.seed;
    }
    if (j.contains("train")) {
        const std::uint64_t derived = c.train.seed;
        c.train = train_config_from_json(j["train"]);
        if (!j["train"].contains("seed")) c.train.seed = derived;
    }
    read(j, "tune", c.tune, w);
    read(j, "tune_trials", c.tune_trials, w);
    if (j.contains("search")) c.search = search_space_from_json(j["search"]);
    read(j, "cv_folds", c.cv_folds, w);
    if (j.contains("thresholds")) {
        const Json& t = j["thresholds"];
        check_object(t, "thresholds", {"voxel_youden_t", "lesion_decision_t"});
        if (t.contains("voxel_youden_t") && !t["voxel_youden_t"].is_null()) {
            double v = 0;
            read(t, "voxel_youden_t", v, "thresholds");
            c.voxel_youden_t = v;
        }
        read(t, "lesion_decision_t", c.lesion_decision_t, "thresholds");
    }
    if (j.contains("detection")) {
        const Json& d = j["detection"];
        check_object(d, "detection", {"connectivity", "max_lesions"});
        read(d, "connectivity", c.connectivity, "detection");
        read(d, "max_lesions", c.max_lesions, "detection");
    }
    if (j.contains("explain")) {
        const Json& e = j["explain"];
        check_object(e, "explain", {"aggregation", "top_k"});
        c.shap_aggregation = lesion_aggregation_from_string(read_string(e, "aggregation", to_string(c.shap_aggregation), "explain"));
        read(e, "top_k", c.shap_top_k, "explain");
    }
    try {
        c.validate();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Config) throw;
        throw Error(ErrorCode::Config, e.what());
    }
    return c;
}

Json to_json(const PipelineConfig& c) {
    Json j;
    j["format"] = "prorad-config";
    j["version"] = kConfigVersion;
    j["seed"] = c.seed;
    j["preprocess"] = to_json(c.preprocess);
    j["features"] = to_json(c.features);
    j["sampling"] = to_json(c.sampling);
    j["train"] = to_json(c.train);
    j["tune"] = c.tune;
    j["tune_trials"] = c.tune_trials;
    j["search"] = to_json(c.search);
    j["cv_folds"] = c.cv_folds;
    Json t;
    t["voxel_youden_t"] = c.voxel_youden_t ? Json(*c.voxel_youden_t) : Json(nullptr);
    t["lesion_decision_t"] = c.lesion_decision_t;
    j["thresholds"] = t;
    j["detection"] = {{"connectivity", c.connectivity}, {"max_lesions", c.max_lesions}};
    j["explain"] = {{"aggregation", to_string(c.shap_aggregation)}, {"top_k", c.shap_top_k}};
    return j;
}

std::string config_hash(const PipelineConfig& c) { return sha256_hex(to_json(c).dump()).substr(0, 16); }

PipelineConfig load_config(const std::filesystem::path& path) {
    Json j;
    try {
        j = read_json(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, e.what());
    }
    return config_from_json(j);
}

void write_json(const Json& j, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return Json::parse(ss.str());
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Schema, path.string() + ": " + e.what());
    }
}

}  // namespace prorad
