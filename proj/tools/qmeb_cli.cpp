// qmeb_cli — batch driver for the master-equation benchmarks.
//
//   qmeb_cli landscape  --config configs/landscape.ini --out results/landscape --workers 4
//   qmeb_cli trajectory --config configs/trajectory_detuned.ini --methods QOME,RFE_TDC,PRWA

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qmeb/cli.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> out;
    std::optional<int> workers;
    std::optional<std::string> methods;
    std::optional<double> timeout;
};

void add_verb(CLI::App& app, const std::string& name, const std::string& what, Overrides& o) {
    auto* sub = app.add_subcommand(name, what);
    sub->add_option("--config", o.config, "INI experiment file (defaults apply when omitted)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--workers", o.workers, "number of worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--methods", o.methods, "comma separated list, e.g. RFE_TDC,QOME");
    sub->add_option("--timeout", o.timeout, "per-point time limit in seconds");
}

} // namespace

int main(int argc, char** argv) {
    using namespace qmeb::cli;
    CLI::App app{"Exact pseudo-mode benchmarks of perturbative master equations"};
    app.require_subcommand(1);
    Overrides o;
    add_verb(app, "landscape", "error bound, relative error and positivity over an (eta, gamma) grid", o);
    add_verb(app, "trajectory", "observables of every method against the reference", o);
    add_verb(app, "scaling", "relative error against eta with fitted log-log slopes", o);
    add_verb(app, "positivity", "minimum eigenvalues of the Redfield variants", o);
    CLI11_PARSE(app, argc, argv);

    const Mode mode = parse_mode(app.get_subcommands().front()->get_name());
    ExperimentConfig cfg;
    try {
        cfg = o.config.empty() ? default_config(mode) : load_config(o.config, mode);
        if (o.out) cfg.out = *o.out;
        if (o.workers) cfg.workers = *o.workers;
        if (o.methods) cfg.methods = parse_method_list(*o.methods);
        if (o.timeout) cfg.timeout_s = *o.timeout;
        cfg.validate();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "qmeb_cli: %s\n", e.what());
        return 2;
    }

    try {
        const RunSummary s = run(cfg);
        for (const auto& w : s.warnings) {
            std::fprintf(stderr, "warning: %s\n", w.c_str());
        }
        for (const auto& f : s.files) {
            std::printf("wrote %s\n", f.string().c_str());
        }
        std::printf("%zu points, %zu failed\n", s.points, s.failed);
        return s.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "qmeb_cli: %s\n", e.what());
        return 1;
    }
}
