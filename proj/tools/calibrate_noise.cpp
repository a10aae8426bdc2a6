// Finds the receiver noise level at which subsets of `--subset` averaged
// traces give a triple-consistency RMS of `--target` ps.
//
// An average of N traces with noise sigma has the same distribution as one
// trace with noise sigma / sqrt(N), so each trial renders a single trace.
// Trials reuse their noise streams across sigma, which keeps RMS(sigma)
// monotone enough for bisection.

#include "corrotdr/cli/commands.hpp"
#include "corrotdr/log.hpp"
#include "corrotdr/pipeline.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>

using namespace corrotdr;

namespace {

struct Trial {
    double rms_ps = 0.0;
    std::size_t failed = 0;
};

Trial evaluate(const cli::RunConfig& base, double sigma, std::size_t subset, std::size_t trials)
{
    cli::RunConfig cfg = base;
    cfg.capture.noise_sigma = sigma / std::sqrt(static_cast<double>(subset));
    const auto sc = cli::make_scenario(cfg);
    const LatencyPipeline pipeline(sc.reference, sc.samples_per_bit, cfg.pipeline);
    Trial t;
    double ss = 0.0;
    std::size_t used = 0;
    std::vector<double> buf;
    for (std::size_t i = 0; i < trials; ++i) {
        sc.simulator->simulate_into(0.0, cfg.run.wavelength_nm, i, buf);
        SampledWaveform w{buf, sc.burst.sample_rate, 0.0};
        const auto res = pipeline.analyze(w);
        if (res.report && res.report->consistency_error) {
            const double e = *res.report->consistency_error * 1e12;
            ss += e * e;
            ++used;
        } else {
            ++t.failed;
        }
    }
    t.rms_ps = used ? std::sqrt(ss / static_cast<double>(used)) : INFINITY;
    return t;
}

}  // namespace

int main(int argc, char** argv)
{
    init_logging();
    CLI::App app{"Calibrate the receiver noise level against the subset RMS target"};
    cli::CommandOptions opts;
    std::size_t subset = 100;
    std::size_t trials = 60;
    double target = 3.25;
    double lo = 0.0;
    double hi = 1.0;
    int steps = 14;
    app.add_option("--config", opts.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_flag("--lite", opts.lite, "desk-scale preset");
    app.add_option("--subset", subset, "averages per subset");
    app.add_option("--trials", trials, "simulated subsets per evaluation");
    app.add_option("--target", target, "target RMS in ps");
    app.add_option("--lo", lo, "lower sigma bracket");
    app.add_option("--hi", hi, "upper sigma bracket");
    app.add_option("--steps", steps, "bisection steps");
    CLI11_PARSE(app, argc, argv);

    return cli::run_guarded([&] {
        const auto base = cli::resolve_config(opts);
        for (int k = 0; k < steps; ++k) {
            const double mid = 0.5 * (lo + hi);
            const auto t = evaluate(base, mid, subset, trials);
            std::cout << "sigma " << mid << "  rms " << t.rms_ps << " ps  failed " << t.failed << '\n';
            (t.rms_ps > target || t.failed > 0 ? hi : lo) = mid;
        }
        const double sigma = 0.5 * (lo + hi);
        const auto t = evaluate(base, sigma, subset, trials);
        std::cout << "calibrated noise_sigma " << sigma << "  rms " << t.rms_ps << " ps  failed " << t.failed << '\n';
        return 0;
    });
}
