#include "corrotdr/cli/commands.hpp"
#include "corrotdr/log.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace corrotdr::cli;

int main(int argc, char** argv)
{
    corrotdr::init_logging();

    CLI::App app{"Correlation OTDR latency toolkit"};
    app.require_subcommand(1);

    CommandOptions opts;
    std::vector<std::size_t> sizes;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out, "output directory")->required();
        sub->add_option("--jobs", opts.jobs, "worker threads");
    };

    auto* sim = app.add_subcommand("simulate", "render a trace set");
    add_common(sim);
    sim->add_option("--seed", opts.seed, "noise seed");
    sim->add_flag("--lite", opts.lite, "desk-scale preset");
    sim->add_option("--traces", opts.traces, "number of traces");

    auto* ana = app.add_subcommand("analyze", "average, correlate and fit a trace set");
    add_common(ana);
    ana->add_option("traceset", opts.input, "trace set directory")->required();
    ana->add_option("--traces", opts.traces, "average only the first N traces");
    ana->add_flag("!--no-correlation", opts.write_correlation, "skip the correlation CSVs");

    auto* rms = app.add_subcommand("rms-study", "triple-reflection RMS error against subset size");
    add_common(rms);
    rms->add_option("traceset", opts.input, "trace set directory")->required();
    auto* sizes_opt = rms->add_option("--subset-sizes", sizes, "subset sizes")->delimiter(',');

    auto* cd = app.add_subcommand("cd-sweep", "simulate a wavelength sweep and estimate dispersion");
    add_common(cd);
    cd->add_option("--seed", opts.seed, "noise seed");
    cd->add_flag("--lite", opts.lite, "desk-scale preset");
    cd->add_option("--traces", opts.traces, "traces per wavelength");
    cd->add_flag("!--no-drift-compensation", opts.compensate_drift, "fit raw subset averages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    auto* active = app.get_subcommands().front();
    if (sizes_opt->count() > 0) {
        opts.subset_sizes = sizes;
    }

    return run_guarded([&] {
        if (active == sim) {
            return cmd_simulate(opts, std::cout);
        }
        if (active == ana) {
            return cmd_analyze(opts, std::cout);
        }
        if (active == rms) {
            return cmd_rms_study(opts, std::cout);
        }
        return cmd_cd_sweep(opts, std::cout);
    });
}
