#include "prorad/case.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "prorad/nifti.hpp"

namespace prorad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorCode::Schema, "manifest: " + what); }

const json& require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(where + " is missing '" + key + "'");
    return *it;
}

fs::path resolve(const json& v, const fs::path& base, const std::string& where) {
    if (!v.is_string()) schema_error(where + " must be a path string");
    const fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::optional<fs::path> optional_path(const json& obj, const char* key, const fs::path& base,
                                      const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    return resolve(*it, base, where + "." + key);
}

int integer_in(const json& v, int lo, int hi, const std::string& where) {
    if (!v.is_number_integer()) schema_error(where + " must be an integer");
    const int x = v.get<int>();
    if (x < lo || x > hi) schema_error(where + " out of range");
    return x;
}

CaseEntry parse_case(const json& c, const fs::path& base) {
    if (!c.is_object()) schema_error("case entries must be objects");
    CaseEntry e;
    const json& id = require(c, "case_id", "case");
    if (!id.is_string() || id.get<std::string>().empty()) schema_error("case_id must be a non-empty string");
    e.case_id = id.get<std::string>();
    const std::string where = "case '" + e.case_id + "'";

    e.t2w = resolve(require(c, "t2w", where), base, where + ".t2w");
    if (auto it = c.find("dwi"); it != c.end()) {
        if (!it->is_array()) schema_error(where + ".dwi must be an array");
        for (const json& d : *it) {
            const json& b = require(d, "b", where + ".dwi[]");
            if (!b.is_number() || b.get<double>() < 0) schema_error(where + ".dwi[].b must be a non-negative number");
            e.dwi.push_back({b.get<double>(), resolve(require(d, "path", where + ".dwi[]"), base, where + ".dwi[].path")});
        }
    }
    e.adc = optional_path(c, "adc", base, where);
    e.hbv = optional_path(c, "hbv", base, where);
    if (e.dwi.empty() && !e.adc) schema_error(where + " needs dwi series or an adc volume");

    const json& masks = require(c, "masks", where);
    e.prostate = resolve(require(masks, "prostate", where + ".masks"), base, where + ".masks.prostate");
    e.pz = resolve(require(masks, "pz", where + ".masks"), base, where + ".masks.pz");
    e.tz = resolve(require(masks, "tz", where + ".masks"), base, where + ".masks.tz");
    e.pz_likelihood = optional_path(c, "pz_likelihood", base, where);

    if (auto it = c.find("gt"); it != c.end() && !it->is_null()) {
        e.gt_labels = resolve(require(*it, "labels", where + ".gt"), base, where + ".gt.labels");
        for (const json& l : require(*it, "lesions", where + ".gt")) {
            LesionEntry le;
            le.label = integer_in(require(l, "label", where + ".gt.lesions[]"), 1, 65535, where + ".gt.lesions[].label");
            le.grade_group = integer_in(require(l, "gg", where + ".gt.lesions[]"), 1, 5, where + ".gt.lesions[].gg");
            if (auto p = l.find("pirads"); p != l.end() && !p->is_null())
                le.pirads = integer_in(*p, 1, 5, where + ".gt.lesions[].pirads");
            e.lesions.push_back(le);
        }
    }
    if (auto p = c.find("pirads_patient"); p != c.end() && !p->is_null())
        e.pirads_patient = integer_in(*p, 1, 5, where + ".pirads_patient");

    const json& split = require(c, "split", where);
    if (!split.is_string() || (split != "train" && split != "test")) schema_error(where + ".split must be train or test");
    e.split = split.get<std::string>();

    if (auto r = c.find("t2w_ref"); r != c.end() && !r->is_null()) {
        auto number = [&](const char* k) -> std::optional<double> {
            auto it = r->find(k);
            if (it == r->end() || it->is_null()) return std::nullopt;
            if (!it->is_number()) schema_error(where + ".t2w_ref." + k + " must be a number");
            return it->get<double>();
        };
        e.t2w_ref.low = number("low");
        e.t2w_ref.high = number("high");
        e.t2w_ref.low_mask = optional_path(*r, "low_mask", base, where + ".t2w_ref");
        e.t2w_ref.high_mask = optional_path(*r, "high_mask", base, where + ".t2w_ref");
        if (!(e.t2w_ref.low || e.t2w_ref.low_mask) || !(e.t2w_ref.high || e.t2w_ref.high_mask))
            schema_error(where + ".t2w_ref needs low/low_mask and high/high_mask");
    }
    return e;
}

void require_file(const fs::path& p, ErrorCode code, const std::string& what) {
    if (!fs::exists(p)) throw Error(code, what + " not found: " + p.string());
}

// Harmonization refuses volumes whose extent does not intersect the reference grid at
// all; anything else is a plain resample in the shared world frame.
void check_overlap(const Grid& src, const Grid& ref) {
    for (int a = 0; a < 3; ++a) {
        const double s_lo = src.origin[a] - 0.5 * src.spacing[a];
        const double s_hi = src.origin[a] + (static_cast<double>(src.dims[a]) - 0.5) * src.spacing[a];
        const double r_lo = ref.origin[a] - 0.5 * ref.spacing[a];
        const double r_hi = ref.origin[a] + (static_cast<double>(ref.dims[a]) - 0.5) * ref.spacing[a];
        if (s_hi <= r_lo || r_hi <= s_lo) throw Error(ErrorCode::FrameMismatch, "volume does not overlap the T2W grid");
    }
}

template <typename T>
Image<T> adopt(const Image<T>& v, const Grid& ref) {
    return Image<T>(ref, std::vector<T>(v.values().begin(), v.values().end()));
}

}  // namespace

bool CaseRecord::has_cspca() const noexcept {
    return std::any_of(gt_lesions.begin(), gt_lesions.end(), [](const GtLesion& l) { return l.grade_group >= 2; });
}

DatasetManifest parse_manifest_text(const std::string& text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        schema_error(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) schema_error("top level must be an object");
    DatasetManifest m;
    if (auto v = doc.find("version"); v != doc.end()) m.version = integer_in(*v, 1, 1, "version");
    const json& cases = require(doc, "cases", "manifest");
    if (!cases.is_array()) schema_error("cases must be an array");
    std::set<std::string> ids;
    for (const json& c : cases) {
        CaseEntry e = parse_case(c, base_dir);
        if (!ids.insert(e.case_id).second) schema_error("duplicate case_id '" + e.case_id + "'");
        std::set<fs::path> paths{e.t2w, e.prostate, e.pz, e.tz};
        std::size_t expected = 4;
        for (const auto& d : e.dwi) {
            paths.insert(d.path);
            ++expected;
        }
        for (const auto* o : {&e.adc, &e.hbv, &e.pz_likelihood, &e.gt_labels}) {
            if (*o) {
                paths.insert(**o);
                ++expected;
            }
        }
        if (paths.size() != expected) schema_error("case '" + e.case_id + "' reuses a path for two volumes");
        m.cases.push_back(std::move(e));
    }
    return m;
}

DatasetManifest parse_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest_text(ss.str(), path.parent_path());
}

Volume3D harmonize(const Volume3D& v, const Grid& ref, Interpolation mode) {
    if (v.grid().same_frame(ref)) return adopt(v, ref);
    check_overlap(v.grid(), ref);
    return resample_to_grid(v, ref, mode);
}

Mask3D harmonize(const Mask3D& m, const Grid& ref) {
    if (m.grid().same_frame(ref)) return adopt(m, ref);
    check_overlap(m.grid(), ref);
    return resample_to_grid(m, ref);
}

LabelVolume harmonize(const LabelVolume& l, const Grid& ref) {
    if (l.grid().same_frame(ref)) return adopt(l, ref);
    check_overlap(l.grid(), ref);
    return resample_to_grid(l, ref);
}

CaseRecord load_case(const CaseEntry& e) {
    CaseRecord c;
    c.case_id = e.case_id;
    c.split = e.split;
    require_file(e.t2w, ErrorCode::IoFailure, "t2w volume");
    for (const auto& [what, p] : {std::pair{"prostate mask", &e.prostate}, {"pz mask", &e.pz}, {"tz mask", &e.tz}})
        require_file(*p, ErrorCode::MissingMask, what);

    c.t2w = read_nifti(e.t2w);
    const Grid& g = c.t2w.grid();
    for (const auto& d : e.dwi) c.dwi.push_back({d.b, harmonize(read_nifti(d.path), g, Interpolation::Linear)});
    if (e.adc) c.adc = harmonize(read_nifti(*e.adc), g, Interpolation::Linear);
    if (e.hbv) c.hbv = harmonize(read_nifti(*e.hbv), g, Interpolation::Linear);
    c.prostate = harmonize(read_nifti_mask(e.prostate), g);
    c.pz = harmonize(read_nifti_mask(e.pz), g);
    c.tz = harmonize(read_nifti_mask(e.tz), g);
    if (count_nonzero(c.prostate) == 0) throw Error(ErrorCode::EmptyMask, "prostate mask of " + e.case_id + " is empty");
    if (e.pz_likelihood) c.pz_likelihood = harmonize(read_nifti(*e.pz_likelihood), g, Interpolation::Linear);

    if (e.gt_labels) {
        c.gt_labels = harmonize(read_nifti_labels(*e.gt_labels), g);
        std::set<int> present;
        for (std::int32_t v : c.gt_labels->values())
            if (v != 0) present.insert(v);
        std::set<int> declared;
        for (const auto& l : e.lesions) {
            if (!declared.insert(l.label).second)
                throw Error(ErrorCode::LabelMismatch, e.case_id + ": lesion label listed twice");
            c.gt_lesions.push_back({l.label, l.grade_group, l.pirads});
        }
        if (present != declared) {
            throw Error(ErrorCode::LabelMismatch,
                        e.case_id + ": gt label volume and lesion list disagree on the set of labels");
        }
    } else if (!e.lesions.empty()) {
        throw Error(ErrorCode::LabelMismatch, e.case_id + ": lesions listed without a label volume");
    }
    c.pirads_patient = e.pirads_patient;

    c.ref_low = e.t2w_ref.low;
    c.ref_high = e.t2w_ref.high;
    if (e.t2w_ref.low_mask) {
        require_file(*e.t2w_ref.low_mask, ErrorCode::MissingMask, "reference mask");
        c.ref_low_mask = harmonize(read_nifti_mask(*e.t2w_ref.low_mask), g);
    }
    if (e.t2w_ref.high_mask) {
        require_file(*e.t2w_ref.high_mask, ErrorCode::MissingMask, "reference mask");
        c.ref_high_mask = harmonize(read_nifti_mask(*e.t2w_ref.high_mask), g);
    }
    return c;
}

}  // namespace prorad
