#include <iostream>

#include "CLI11.hpp"

#include "prorad/error.hpp"
#include "prorad/phantom.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Writes a synthetic bpMRI cohort and its manifest"};
    prorad::PhantomSpec spec;
    std::string out = "phantom";
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_option("--cases", spec.cases, "number of cases")->capture_default_str();
    app.add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    app.add_option("--noise", spec.noise, "relative noise sd")->capture_default_str();
    app.add_option("--nx", spec.dims[0])->capture_default_str();
    app.add_option("--ny", spec.dims[1])->capture_default_str();
    app.add_option("--nz", spec.dims[2])->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    try {
        std::cout << prorad::write_phantom_cohort(spec, out).string() << "\n";
    } catch (const prorad::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
