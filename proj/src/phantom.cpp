#include "prorad/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "prorad/config.hpp"
#include "prorad/nifti.hpp"
#include "prorad/random.hpp"

namespace fs = std::filesystem;

namespace prorad {

namespace {

struct Sphere {
    Vec3 center;  // mm
    double radius;
    int label;
    int gg;
};

double sq(double v) { return v * v; }

// Inside test for an axis-aligned ellipsoid, returns the normalized radius squared.
double ellipsoid(const Vec3& p, const Vec3& c, const Vec3& r) {
    return sq((p[0] - c[0]) / r[0]) + sq((p[1] - c[1]) / r[1]) + sq((p[2] - c[2]) / r[2]);
}

std::string case_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ph%03d", i);
    return buf;
}

}  // namespace

fs::path write_phantom_cohort(const PhantomSpec& spec, const fs::path& dir) {
    if (spec.cases < 4) throw Error(ErrorCode::InvalidArgument, "phantom cohort needs at least 4 cases");
    fs::create_directories(dir);
    Grid g;
    g.dims = spec.dims;
    g.spacing = spec.spacing;
    g.validate();
    const Vec3 extent{g.dims[0] * g.spacing[0], g.dims[1] * g.spacing[1], g.dims[2] * g.spacing[2]};
    const double bvals[] = {50.0, 400.0, 800.0};

    Json cases = Json::array();
    for (int i = 0; i < spec.cases; ++i) {
        const std::string id = case_name(i);
        Rng rng(derive_seed(spec.seed, id));
        const bool positive = i % 2 == 0;
        const Vec3 pc{extent[0] * 0.5 + rng.uniform(-1, 1), extent[1] * 0.5 + rng.uniform(-1, 1), extent[2] * 0.5};
        const double scale = rng.uniform(0.9, 1.1);
        const Vec3 pr{extent[0] * 0.34 * scale, extent[1] * 0.28 * scale, extent[2] * 0.40};
        // TZ: smaller ellipsoid pushed anteriorly (towards low y).
        const Vec3 tc{pc[0], pc[1] - pr[1] * 0.25, pc[2]};
        const Vec3 tr{pr[0] * 0.55, pr[1] * 0.5, pr[2] * 0.8};

        std::vector<Sphere> lesions;
        if (positive) {
            const int count = i % 4 == 0 ? 2 : 1;
            for (int k = 0; k < count; ++k) {
                for (int attempt = 0; attempt < 1000; ++attempt) {
                    const double r = rng.uniform(5.0, 6.5);
                    const Vec3 c{pc[0] + rng.uniform(-0.6, 0.6) * pr[0], pc[1] + rng.uniform(-0.6, 0.6) * pr[1], pc[2]};
                    // Keep most of the sphere inside the gland and away from other lesions.
                    const Vec3 shrunk{pr[0] - r * 0.6, pr[1] - r * 0.6, pr[2]};
                    if (ellipsoid(c, pc, shrunk) > 1.0) continue;
                    bool clear = true;
                    for (const auto& o : lesions)
                        clear = clear && std::sqrt(sq(c[0] - o.center[0]) + sq(c[1] - o.center[1])) > r + o.radius + 3.0;
                    if (!clear) continue;
                    lesions.push_back({c, r, k + 1, static_cast<int>(rng.integer(2, 5))});
                    break;
                }
            }
        }

        const double t2_gain = rng.uniform(0.8, 1.25);
        const double s0_gain = rng.uniform(0.8, 1.25);
        Volume3D t2(g), lesion_weight(g);
        Mask3D prostate(g), pz(g), tz(g), muscle(g), fat(g);
        LabelVolume labels(g, 0);
        std::vector<Volume3D> dwi(3, Volume3D(g));
        for (std::int64_t z = 0; z < g.dims[2]; ++z)
            for (std::int64_t y = 0; y < g.dims[1]; ++y)
                for (std::int64_t x = 0; x < g.dims[0]; ++x) {
                    const std::size_t v = g.linear(x, y, z);
                    const Vec3 p{(x + 0.5) * g.spacing[0], (y + 0.5) * g.spacing[1], (z + 0.5) * g.spacing[2]};
                    double t2v = 150.0, adc = 2.0e-3, s0 = 600.0;
                    if (x < g.dims[0] / 8 && y > g.dims[1] * 3 / 4) {
                        muscle[v] = 1;
                        t2v = 80.0;
                        adc = 1.4e-3;
                    } else if (x > g.dims[0] * 7 / 8 && y < g.dims[1] / 4) {
                        fat[v] = 1;
                        t2v = 600.0;
                        adc = 0.3e-3;
                        s0 = 300.0;
                    }
                    if (ellipsoid(p, pc, pr) <= 1.0) {
                        prostate[v] = 1;
                        if (ellipsoid(p, tc, tr) <= 1.0) {
                            tz[v] = 1;
                            t2v = 220.0;
                            adc = 1.25e-3;
                        } else {
                            pz[v] = 1;
                            t2v = 320.0;
                            adc = 1.6e-3;
                        }
                        s0 = 1000.0;
                        for (const auto& l : lesions) {
                            const double d = std::sqrt(sq(p[0] - l.center[0]) + sq(p[1] - l.center[1]) + sq(p[2] - l.center[2]));
                            if (d > l.radius) continue;
                            labels[v] = l.label;
                            t2v = 110.0;
                            adc = 0.7e-3;
                        }
                    }
                    t2[v] = t2_gain * t2v * (1.0 + spec.noise * rng.normal());
                    for (int b = 0; b < 3; ++b)
                        dwi[b][v] = std::max(1e-3, s0_gain * s0 * (std::exp(-bvals[b] * adc) + spec.noise * 0.1 * rng.normal()));
                }

        const fs::path cd = dir / id;
        fs::create_directories(cd);
        write_nifti(t2, cd / "t2w.nii.gz", NiftiType::F32);
        Json dw = Json::array();
        for (int b = 0; b < 3; ++b) {
            const std::string name = "dwi_b" + std::to_string(static_cast<int>(bvals[b])) + ".nii.gz";
            write_nifti(dwi[b], cd / name, NiftiType::F32);
            dw.push_back({{"b", bvals[b]}, {"path", id + "/" + name}});
        }
        write_nifti(prostate, cd / "prostate.nii.gz");
        write_nifti(pz, cd / "pz.nii.gz");
        write_nifti(tz, cd / "tz.nii.gz");
        write_nifti(muscle, cd / "muscle.nii.gz");
        write_nifti(fat, cd / "fat.nii.gz");
        write_nifti(labels, cd / "gt_labels.nii.gz");

        Json c;
        c["case_id"] = id;
        c["split"] = i < spec.cases / 2 ? "train" : "test";
        c["t2w"] = id + "/t2w.nii.gz";
        c["dwi"] = dw;
        c["masks"] = {{"prostate", id + "/prostate.nii.gz"}, {"pz", id + "/pz.nii.gz"}, {"tz", id + "/tz.nii.gz"}};
        Json les = Json::array();
        for (const auto& l : lesions) les.push_back({{"label", l.label}, {"gg", l.gg}, {"pirads", 4}});
        c["gt"] = {{"labels", id + "/gt_labels.nii.gz"}, {"lesions", les}};
        if (spec.with_pirads) {
            // Imperfect reader: mostly right, a few calls on the wrong side of 4.
            const int score = positive ? static_cast<int>(rng.integer(3, 5)) : static_cast<int>(rng.integer(1, 4));
            c["pirads_patient"] = score;
        }
        c["t2w_ref"] = {{"low_mask", id + "/muscle.nii.gz"}, {"high_mask", id + "/fat.nii.gz"}};
        cases.push_back(c);
    }
    Json manifest;
    manifest["version"] = 1;
    manifest["cases"] = cases;
    const fs::path path = dir / "manifest.json";
    write_json(manifest, path);
    return path;
}

}  // namespace prorad
