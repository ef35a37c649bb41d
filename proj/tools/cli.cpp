#include "cli.hpp"

#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "prorad/parallel.hpp"
#include "prorad/pipeline.hpp"

namespace prorad {

namespace {

int exit_code_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::Config:
        case ErrorCode::Schema: return kExitConfig;
        default: return kExitRuntime;
    }
}

int report(const std::vector<StageResult>& results, std::ostream& out, std::ostream& err) {
    bool partial = false;
    for (const auto& r : results) {
        for (const auto& w : r.warnings) err << "warning: " << r.stage << ": " << w << "\n";
        for (const auto& f : r.failed_cases) err << "failed: " << r.stage << ": " << f << "\n";
        partial = partial || !r.failed_cases.empty();
        out << r.stage << (r.cached ? ": cached" : ": done") << "\n";
    }
    return partial ? kExitPartial : kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Voxel-wise radiomics csPCa detection pipeline"};
    app.require_subcommand(1);
    std::string manifest, config, model, outdir = "prorad_out";
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    bool quiet = false;

    const std::vector<std::string> stages{"preprocess", "extract", "train", "tune", "predict",
                                          "detect", "evaluate", "explain", "run-all"};
    std::map<std::string, CLI::App*> subs;
    for (const auto& s : stages) {
        CLI::App* sub = app.add_subcommand(s);
        sub->add_option("--manifest", manifest, "dataset manifest (JSON)");
        sub->add_option("--config", config, "pipeline config (JSON); defaults apply when omitted");
        sub->add_option("--out", outdir, "output directory")->capture_default_str();
        sub->add_option("--threads", threads, "worker threads (default: PRORAD_THREADS or all cores)");
        sub->add_option("--seed", seed, "master seed; overrides the config and re-derives sub-seeds");
        sub->add_flag("--quiet,-q", quiet, "suppress progress lines");
        if (s == "predict" || s == "detect" || s == "explain") sub->add_option("--model", model, "model bundle (JSON)");
        subs[s] = sub;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    std::string stage;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) stage = name;

    try {
        RunContext ctx;
        // Defaults go through the parser too so sub-seeds are derived the same way.
        ctx.config = config.empty() ? config_from_json(Json::object()) : load_config(config);
        if (seed) {
            ctx.config.seed = *seed;
            ctx.config.apply_seed(*seed);
        }
        ctx.config.validate();
        ctx.config_hash = config_hash(ctx.config);
        ctx.out.root = outdir;
        ctx.threads = threads ? *threads : (ctx.config.threads > 0 ? ctx.config.threads : default_thread_count());
        if (ctx.threads == 0) throw Error(ErrorCode::Config, "--threads must be at least 1");
        if (!model.empty()) ctx.model_path = model;
        if (!quiet) ctx.log = [&err](const std::string& m) { err << m << "\n"; };
        if (!manifest.empty()) {
            ctx.manifest_path = manifest;
            ctx.manifest = parse_manifest(manifest);
        } else if (stage == "preprocess" || stage == "run-all") {
            throw Error(ErrorCode::Config, "--manifest is required for " + stage);
        }

        if (stage == "run-all") return report(run_all(ctx), out, err);
        if (!manifest.empty() && stage == "preprocess") {
            std::filesystem::create_directories(ctx.out.root);
            write_provenance(ctx);
        }
        using Fn = StageResult (*)(const RunContext&);
        const std::map<std::string, Fn> fns{{"preprocess", run_preprocess}, {"extract", run_extract}, {"train", run_train},
                                            {"tune", run_tune},             {"predict", run_predict}, {"detect", run_detect},
                                            {"evaluate", run_evaluate},     {"explain", run_explain}};
        return report({fns.at(stage)(ctx)}, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace prorad
