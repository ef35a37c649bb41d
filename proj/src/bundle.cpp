#include "prorad/bundle.hpp"

#include <cmath>

#include "prorad/error.hpp"

namespace prorad {

namespace {

Json tree_to_json(const Tree& t) {
    Json nodes = Json::array();
    for (const auto& n : t.nodes) {
        Json o;
        if (n.is_leaf()) {
            o["leaf"] = n.weight;
        } else {
            o["feature"] = n.feature;
            o["threshold"] = n.threshold;
            o["left"] = n.left;
            o["right"] = n.right;
            o["default_left"] = n.default_left;
            o["gain"] = n.gain;
        }
        o["cover"] = n.cover;
        nodes.push_back(std::move(o));
    }
    return nodes;
}

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::Schema, "model bundle: " + what); }

const Json& section(const Json& j, const char* key) {
    if (!j.contains(key)) schema(std::string("missing '") + key + "'");
    return j[key];
}

double finite_number(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number()) schema(where + " lacks numeric '" + key + "'");
    const double v = j[key].get<double>();
    if (!std::isfinite(v)) schema(where + "." + key + " is not finite");
    return v;
}

Tree tree_from_json(const Json& nodes, std::size_t width, std::size_t index) {
    const std::string where = "tree " + std::to_string(index);
    if (!nodes.is_array() || nodes.empty()) schema(where + " has no nodes");
    Tree t;
    const int count = static_cast<int>(nodes.size());
    for (const auto& o : nodes) {
        TreeNode n;
        if (o.contains("leaf")) {
            n.weight = finite_number(o, "leaf", where);
        } else {
            if (!o.contains("feature") || !o["feature"].is_number_integer()) schema(where + " has a node without feature");
            n.feature = o["feature"].get<int>();
            if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= width) schema(where + " splits on an unknown feature");
            n.threshold = finite_number(o, "threshold", where);
            if (!o.contains("left") || !o.contains("right") || !o["left"].is_number_integer() || !o["right"].is_number_integer())
                schema(where + " node lacks children");
            n.left = o["left"].get<int>();
            n.right = o["right"].get<int>();
            n.default_left = o.value("default_left", true);
            n.gain = o.contains("gain") ? finite_number(o, "gain", where) : 0.0;
        }
        // Cover is optional for prediction; explanations refuse nodes without it.
        n.cover = o.contains("cover") ? finite_number(o, "cover", where) : 0.0;
        t.nodes.push_back(n);
    }
    // Children must point forward so the structure is a finite tree.
    std::vector<int> parents(count, 0);
    for (int i = 0; i < count; ++i) {
        const auto& n = t.nodes[i];
        if (n.is_leaf()) continue;
        if (n.left <= i || n.right <= i || n.left >= count || n.right >= count || n.left == n.right)
            schema(where + " has invalid child links");
        ++parents[n.left];
        ++parents[n.right];
    }
    for (int i = 1; i < count; ++i)
        if (parents[i] != 1) schema(where + " is not a tree");
    return t;
}

Json thresholds_to_json(const OperatingThresholds& t) {
    Json j;
    j["voxel_youden_t"] = t.voxel_youden_t;
    j["lesion_decision_t"] = t.lesion_decision_t;
    return j;
}

}  // namespace

Json model_to_json(const ModelBundle& b) {
    Json j;
    j["format"] = "prorad-model";
    j["version"] = kModelFormatVersion;
    j["config_hash"] = b.config_hash;
    j["feature_names"] = b.ensemble.feature_names;
    j["base_margin"] = b.ensemble.base_margin;
    Json trees = Json::array();
    for (const auto& t : b.ensemble.trees) trees.push_back(tree_to_json(t));
    j["trees"] = std::move(trees);
    j["train_config"] = to_json(b.train_config);
    j["sampling"] = to_json(b.sampling);
    j["feature_spec"] = to_json(b.feature_spec);
    j["preprocess"] = to_json(b.preprocess);
    j["normalization_stats"] = {{"adc", to_json(b.stats.adc)}, {"hbv", to_json(b.stats.hbv)}};
    j["thresholds"] = thresholds_to_json(b.thresholds);
    return j;
}

namespace {

// Json type errors are folded into Schema by model_from_json.
ModelBundle parse_bundle(const Json& j) {
    if (!j.is_object()) schema("document is not an object");
    if (j.value("format", std::string()) != "prorad-model") schema("format tag is not 'prorad-model'");
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kModelFormatVersion)
        schema("unsupported version");
    ModelBundle b;
    b.config_hash = section(j, "config_hash").get<std::string>();
    const Json& names = section(j, "feature_names");
    if (!names.is_array()) schema("feature_names must be an array");
    for (const auto& n : names) b.ensemble.feature_names.push_back(n.get<std::string>());
    if (b.ensemble.feature_names != feature_names()) schema("feature names do not match the canonical feature list");
    b.ensemble.base_margin = finite_number(j, "base_margin", "bundle");
    const Json& trees = section(j, "trees");
    if (!trees.is_array()) schema("trees must be an array");
    for (std::size_t i = 0; i < trees.size(); ++i) b.ensemble.trees.push_back(tree_from_json(trees[i], b.ensemble.width(), i));
    try {
        b.train_config = train_config_from_json(section(j, "train_config"));
        b.sampling = sampling_from_json(section(j, "sampling"));
        b.feature_spec = feature_spec_from_json(section(j, "feature_spec"));
        b.preprocess = preprocess_config_from_json(section(j, "preprocess"));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Schema) throw;
        schema(e.what());
    }
    const Json& stats = section(j, "normalization_stats");
    if (!stats.is_object() || !stats.contains("adc") || !stats.contains("hbv")) schema("normalization stats incomplete");
    b.stats.adc = stats_from_json(stats["adc"]);
    b.stats.hbv = stats_from_json(stats["hbv"]);
    const Json& th = section(j, "thresholds");
    b.thresholds.voxel_youden_t = finite_number(th, "voxel_youden_t", "thresholds");
    b.thresholds.lesion_decision_t = finite_number(th, "lesion_decision_t", "thresholds");
    try {
        b.thresholds.validate();
    } catch (const Error& e) {
        schema(e.what());
    }
    return b;
}

}  // namespace

ModelBundle model_from_json(const Json& j) {
    try {
        return parse_bundle(j);
    } catch (const Json::exception& e) {
        schema(e.what());
    }
}

void save_model(const ModelBundle& b, const std::filesystem::path& path) { write_json(model_to_json(b), path); }

ModelBundle load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

}  // namespace prorad
