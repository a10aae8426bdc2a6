#include "corrotdr/cli/commands.hpp"
#include "corrotdr/cli/traceset.hpp"
#include "corrotdr/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace corrotdr::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxCorrelationRows = 200000;

double ns(double s) { return s * 1e9; }
double ps(double s) { return s * 1e12; }

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        fail(ErrorCode::Io, "cannot create output directory " + dir.string());
    }
}

std::ofstream open_out(const fs::path& p)
{
    std::ofstream out(p);
    if (!out) {
        fail(ErrorCode::Io, "cannot write " + p.string());
    }
    out << std::setprecision(17);
    return out;
}

void write_json(const fs::path& p, const json& j)
{
    auto out = open_out(p);
    out << j.dump(2) << '\n';
    if (!out) {
        fail(ErrorCode::Io, "cannot write " + p.string());
    }
}

// Config errors surface as Error(Config) regardless of where validation failed.
template <class F>
auto config_stage(F&& f)
{
    try {
        return f();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Io || e.code() == ErrorCode::Config) {
            throw;
        }
        fail(ErrorCode::Config, e.what());
    }
}

PipelineConfig pipeline_for(const CommandOptions& opts, const TraceSetMeta& meta)
{
    return config_stage([&] {
        RunConfig cfg;
        if (!opts.config_path.empty()) {
            cfg = load_config(opts.config_path);
        } else if (!meta.config.empty()) {
            cfg = parse_config(meta.config);
        } else {
            cfg = default_config();
        }
        if (opts.jobs) {
            if (*opts.jobs < 1) {
                fail(ErrorCode::Config, "--jobs must be at least 1");
            }
            cfg.pipeline.jobs = *opts.jobs;
        }
        return cfg.pipeline;
    });
}

json peak_json(const PeakEstimate& p)
{
    return json{{"center_ns", ns(p.center)},
                {"width_ps", ps(p.width)},
                {"amplitude", p.amplitude},
                {"offset", p.offset},
                {"residual_rms", p.residual_rms},
                {"converged", p.converged},
                {"iterations", p.iterations}};
}

json report_json(const LatencyReport& r)
{
    json j{{"input_rtt_ns", ns(r.input_rtt)}, {"end_rtt_ns", ns(r.end_rtt)}, {"fiber_rtt_ns", ns(r.fiber_rtt)}};
    j["triple_rtt_ns"] = r.triple_rtt ? json(ns(*r.triple_rtt)) : json(nullptr);
    j["expected_triple_rtt_ns"] = ns(2.0 * r.end_rtt - r.input_rtt);
    j["consistency_error_ps"] = r.consistency_error ? json(ps(*r.consistency_error)) : json(nullptr);
    return j;
}

void write_correlation_csv(const fs::path& p, const CorrelationResult& c)
{
    auto out = open_out(p);
    out << "lag_ns,value\n";
    // Keep the largest-magnitude sample of each block so peaks survive decimation.
    const std::size_t step = std::max<std::size_t>(1, (c.size() + kMaxCorrelationRows - 1) / kMaxCorrelationRows);
    for (std::size_t b = 0; b < c.size(); b += step) {
        std::size_t best = b;
        for (std::size_t k = b; k < std::min(c.size(), b + step); ++k) {
            if (std::abs(c.values[k]) > std::abs(c.values[best])) {
                best = k;
            }
        }
        out << ns(c.lag_time(static_cast<double>(best))) << ',' << c.values[best] << '\n';
    }
}

void write_peak_windows_csv(const fs::path& p, const CorrelationResult& c, const PipelineResult& res,
                            std::size_t halfwidth)
{
    auto out = open_out(p);
    out << "peak,lag_ns,value,fit\n";
    for (std::size_t i = 0; i < res.peaks.size() && i < res.estimates.size(); ++i) {
        const auto& est = res.estimates[i];
        const std::size_t idx = res.peaks[i].index;
        const std::size_t lo = idx >= halfwidth ? idx - halfwidth : 0;
        const std::size_t hi = std::min(c.size() - 1, idx + halfwidth);
        for (std::size_t k = lo; k <= hi; ++k) {
            const double t = c.lag_time(static_cast<double>(k));
            const double u = (t - est.center) / est.width;
            out << i << ',' << ns(t) << ',' << c.values[k] << ',' << est.offset + est.amplitude * std::exp(-0.5 * u * u)
                << '\n';
        }
    }
}

}  // namespace

int exit_code_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidPolynomial:
        return kExitConfig;
    case ErrorCode::Io:
        return kExitIo;
    default:
        return kExitAnalysis;
    }
}

RunConfig resolve_config(const CommandOptions& opts)
{
    return config_stage([&] {
        RunConfig cfg = opts.config_path.empty() ? default_config() : load_config(opts.config_path);
        if (opts.lite) {
            apply_lite(cfg);
        }
        if (opts.seed) {
            cfg.capture.rng_seed = *opts.seed;
        }
        if (opts.jobs) {
            if (*opts.jobs < 1) {
                fail(ErrorCode::Config, "--jobs must be at least 1");
            }
            cfg.pipeline.jobs = *opts.jobs;
            cfg.run.jobs = *opts.jobs;
        }
        if (opts.traces) {
            if (*opts.traces < 1) {
                fail(ErrorCode::Config, "--traces must be at least 1");
            }
            cfg.run.traces = static_cast<std::size_t>(*opts.traces);
            cfg.sweep.traces_per_wavelength = static_cast<std::size_t>(*opts.traces);
        }
        if (opts.subset_sizes) {
            if (opts.subset_sizes->empty()) {
                fail(ErrorCode::Config, "--subset-sizes must not be empty");
            }
            cfg.subset_sizes = *opts.subset_sizes;
        }
        // Re-validate so overrides and the preset pass the same checks as a file.
        return parse_config(cfg.to_json());
    });
}

Scenario make_scenario(const RunConfig& cfg) { return make_scenario(cfg, cfg.fiber); }

Scenario make_scenario(const RunConfig& cfg, const FiberModel& fiber)
{
    Scenario s;
    s.sequence = gen_prbs(cfg.sequence.order, cfg.sequence.polynomial, cfg.sequence.seed);
    s.burst = build_burst(s.sequence, cfg.burst);
    s.samples_per_bit = cfg.burst.samples_per_bit();
    const std::size_t seg = s.sequence.size() * static_cast<std::size_t>(s.samples_per_bit);
    s.reference.sample_rate = s.burst.sample_rate;
    s.reference.samples.assign(s.burst.samples.begin(), s.burst.samples.begin() + static_cast<std::ptrdiff_t>(seg));
    CaptureSettings capture = cfg.capture;
    capture.sample_rate = cfg.burst.sample_rate;
    s.simulator = std::make_unique<TraceSimulator>(fiber, s.burst, capture);
    return s;
}

json ground_truth(const FiberModel& fiber, double lambda_nm, double wall_clock)
{
    json paths = json::array();
    for (const auto& p : enumerate_paths(fiber, lambda_nm, wall_clock)) {
        paths.push_back({{"label", p.label}, {"delay_ns", ns(p.delay)}, {"amplitude", p.amplitude}, {"bounces", p.bounces}});
    }
    return json{{"wavelength_nm", lambda_nm},
                {"wall_clock_s", wall_clock},
                {"fiber_rtt_ns", ns(group_delay_rtt(fiber, lambda_nm, wall_clock))},
                {"paths", paths}};
}

int cmd_simulate(const CommandOptions& opts, std::ostream& out)
{
    const RunConfig cfg = resolve_config(opts);
    if (opts.out.empty()) {
        fail(ErrorCode::Config, "simulate needs --out");
    }
    const Scenario sc = config_stage([&] { return make_scenario(cfg); });

    TraceSetMeta meta;
    meta.sample_rate = sc.burst.sample_rate;
    meta.bit_rate = cfg.burst.bit_rate;
    meta.samples_per_bit = sc.samples_per_bit;
    meta.trace_length = sc.burst.size();
    meta.config_hash = cfg.hash();
    meta.config = cfg.to_json();
    meta.capture = meta.config["capture"];
    meta.ground_truth = ground_truth(cfg.fiber, cfg.run.wavelength_nm, 0.0);

    const std::vector<float> ref(sc.reference.samples.begin(), sc.reference.samples.end());
    TraceSetWriter writer(opts.out, meta, ref);
    const SimulatedTraceSource source(*sc.simulator, cfg.run.traces, cfg.run.trace_interval_s, cfg.run.wavelength_nm);
    for_each_trace(source, 0, source.count(), cfg.run.jobs,
                   [&](std::size_t, const std::vector<double>& samples, double wall, double lambda) {
                       writer.append(std::span<const double>(samples), wall, lambda);
                   });
    writer.finish();

    json summary{{"command", "simulate"},
                 {"out", opts.out.string()},
                 {"config_hash", meta.config_hash},
                 {"traces", cfg.run.traces},
                 {"trace_length", meta.trace_length},
                 {"sample_rate", meta.sample_rate},
                 {"wavelength_nm", cfg.run.wavelength_nm},
                 {"ground_truth", meta.ground_truth}};
    out << summary.dump(2) << '\n';
    return kExitOk;
}

int cmd_analyze(const CommandOptions& opts, std::ostream& out)
{
    if (opts.out.empty()) {
        fail(ErrorCode::Config, "analyze needs --out");
    }
    const TraceSetReader reader(opts.input);
    const PipelineConfig pcfg = pipeline_for(opts, reader.meta());
    std::size_t n = reader.count();
    if (opts.traces) {
        if (*opts.traces < 1) {
            fail(ErrorCode::Config, "--traces must be at least 1");
        }
        n = std::min(n, static_cast<std::size_t>(*opts.traces));
    }
    if (n == 0) {
        fail(ErrorCode::Io, "trace set holds no traces");
    }
    ensure_dir(opts.out);

    const LatencyPipeline pipeline(reader.reference(), reader.meta().samples_per_bit, pcfg);
    const SampledWaveform avg = average_source(reader, 0, n, pcfg.jobs);
    const PipelineResult res = pipeline.analyze(avg);

    json doc{{"command", "analyze"},
             {"traceset", opts.input.string()},
             {"traceset_config_hash", reader.meta().config_hash},
             {"averaged_traces", n},
             {"candidates", res.candidates.size()},
             {"failed_fits", res.failed_fits},
             {"rejected_shape", res.rejected_shape},
             {"rejected_sidelobe", res.rejected_sidelobe}};
    json peaks = json::array();
    for (const auto& e : res.estimates) {
        peaks.push_back(peak_json(e));
    }
    doc["peaks"] = peaks;
    doc["report"] = res.report ? report_json(*res.report) : json(nullptr);
    if (!res.diagnostic.empty()) {
        doc["diagnostic"] = res.diagnostic;
    }
    write_json(opts.out / "report.json", doc);
    if (opts.write_correlation) {
        write_correlation_csv(opts.out / "correlation.csv", res.filtered);
        write_peak_windows_csv(opts.out / "peak_windows.csv", res.filtered, res, pcfg.window_halfwidth);
    }
    out << doc.dump(2) << '\n';
    if (!res.report) {
        spdlog::error("analysis failed: {}", res.diagnostic);
        return kExitAnalysis;
    }
    return kExitOk;
}

int cmd_rms_study(const CommandOptions& opts, std::ostream& out)
{
    if (opts.out.empty()) {
        fail(ErrorCode::Config, "rms-study needs --out");
    }
    const TraceSetReader reader(opts.input);
    const PipelineConfig pcfg = pipeline_for(opts, reader.meta());
    std::vector<std::size_t> sizes;
    if (opts.subset_sizes) {
        sizes = *opts.subset_sizes;
    } else {
        sizes = config_stage([&] {
            return opts.config_path.empty() ? parse_config(reader.meta().config).subset_sizes
                                            : load_config(opts.config_path).subset_sizes;
        });
    }
    std::vector<std::size_t> usable;
    for (std::size_t s : sizes) {
        if (s < 1 || reader.count() / s < 2) {
            spdlog::warn("subset size {} skipped: {} traces allow fewer than two subsets", s, reader.count());
        } else {
            usable.push_back(s);
        }
    }
    ensure_dir(opts.out);

    std::vector<SubsetRmsRow> rows;
    if (!usable.empty()) {
        const LatencyPipeline pipeline(reader.reference(), reader.meta().samples_per_bit, pcfg);
        rows = rms_study(reader, pipeline, usable);
    }

    auto csv = open_out(opts.out / "rms_study.csv");
    csv << "subset_size,n_subsets,rms_ps,n_failed\n";
    json jrows = json::array();
    for (const auto& r : rows) {
        csv << r.subset_size << ',' << r.n_subsets << ',' << ps(r.rms_error) << ',' << r.n_failed << '\n';
        std::vector<double> errs;
        for (double e : r.errors) {
            errs.push_back(ps(e));
        }
        jrows.push_back({{"subset_size", r.subset_size},
                         {"n_subsets", r.n_subsets},
                         {"rms_ps", std::isfinite(r.rms_error) ? json(ps(r.rms_error)) : json(nullptr)},
                         {"n_failed", r.n_failed},
                         {"errors_ps", errs}});
    }
    if (!csv) {
        fail(ErrorCode::Io, "cannot write rms_study.csv");
    }
    json doc{{"command", "rms-study"},
             {"traceset", opts.input.string()},
             {"traceset_config_hash", reader.meta().config_hash},
             {"traces", reader.count()},
             {"rows", jrows}};
    write_json(opts.out / "rms_study.json", doc);
    out << doc.dump(2) << '\n';
    return kExitOk;
}

std::vector<DispersionPoint> read_reference_curve(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::Io, "cannot open reference curve " + path.string());
    }
    std::vector<DispersionPoint> pts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        DispersionPoint p;
        if (!(ss >> p.wavelength)) {
            continue;
        }
        if (!(ss >> p.d)) {
            fail(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": expected two columns");
        }
        pts.push_back(p);
    }
    if (pts.size() < 2) {
        fail(ErrorCode::Io, path.string() + ": reference curve needs at least two points");
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.wavelength < b.wavelength; });
    return pts;
}

SweepOutcome run_cd_sweep(const RunConfig& cfg, bool compensate)
{
    const auto& sw = cfg.sweep;
    if (sw.wavelengths_nm.size() < 3) {
        fail(ErrorCode::Config, "cd sweep needs at least three wavelengths");
    }
    const std::size_t n_lambda = sw.wavelengths_nm.size();
    const std::size_t n_traces = sw.traces_per_wavelength;
    if (n_traces / sw.subset_size < 2) {
        fail(ErrorCode::Config, "sweep.subset_size must leave at least two subsets per wavelength");
    }

    FiberModel fiber = cfg.fiber;
    if (sw.end_reflectivity > 0 && !fiber.events.empty()) {
        auto end = std::max_element(fiber.events.begin(), fiber.events.end(),
                                    [](const auto& a, const auto& b) { return a.position < b.position; });
        end->reflectivity = sw.end_reflectivity;
    }
    SweepOutcome res;
    res.base_rtt = group_delay_rtt(fiber, fiber.dispersion.lambda0, 0.0);
    // Temperature ramp realizing the requested RTT drift over the sweep.
    if (fiber.temperature.points.empty() && sw.drift_ps != 0.0) {
        fiber.temperature.drift_rate = sw.drift_ps * 1e-12 / (fiber.temperature.coeff * res.base_rtt) / sw.duration_hours;
    }
    res.injected_rate_ps_per_hour = ps(fiber.temperature.drift_rate * fiber.temperature.coeff * res.base_rtt);

    const Scenario sc = config_stage([&] { return make_scenario(cfg, fiber); });
    const LatencyPipeline pipeline(sc.reference, sc.samples_per_bit, cfg.pipeline);

    const double total_s = sw.duration_hours * 3600.0;
    const double block_s = total_s / static_cast<double>(n_lambda);
    const double interval = block_s / static_cast<double>(n_traces);
    res.scan.fiber_length_km = fiber.length / 1000.0;

    for (std::size_t k = 0; k < n_lambda; ++k) {
        const double lambda = sw.wavelengths_nm[k];
        const SimulatedTraceSource source(*sc.simulator, n_traces, interval, lambda, block_s * static_cast<double>(k),
                                          static_cast<std::uint64_t>(k * n_traces));
        WavelengthEntry entry;
        entry.wavelength = lambda;
        for (std::size_t first = 0; first + sw.subset_size <= n_traces; first += sw.subset_size) {
            const auto avg = average_source(source, first, sw.subset_size, cfg.pipeline.jobs);
            const auto r = pipeline.analyze(avg);
            if (!r.report) {
                ++res.failed_subsets;
                spdlog::warn("lambda {} nm, subset at trace {}: {}", lambda, first, r.diagnostic);
                continue;
            }
            const double mid = block_s * static_cast<double>(k) +
                               interval * (static_cast<double>(first) + 0.5 * static_cast<double>(sw.subset_size - 1));
            entry.subsets.push_back({mid, r.report->end_rtt});
        }
        spdlog::info("lambda {} nm: {} subsets", lambda, entry.subsets.size());
        if (entry.subsets.empty()) {
            fail(ErrorCode::InsufficientPeaks, "no usable subset at " + std::to_string(lambda) + " nm");
        }
        res.scan.entries.push_back(std::move(entry));
    }

    const double lo = *std::min_element(sw.wavelengths_nm.begin(), sw.wavelengths_nm.end());
    const double hi = *std::max_element(sw.wavelengths_nm.begin(), sw.wavelengths_nm.end());
    const auto grid = wavelength_grid(lo, hi, sw.grid_points);
    res.result = analyze_scan(res.scan, grid, compensate, fiber.dispersion.lambda0);

    if (sw.reference_curve.empty()) {
        for (double l : grid) {
            res.reference.push_back({l, fiber.dispersion.at(l)});
        }
        res.max_abs_diff = compare_with_reference(res.result.d_curve, fiber.dispersion);
    } else {
        const auto table = read_reference_curve(sw.reference_curve);
        res.max_abs_diff = compare_with_reference(res.result.d_curve, table);
        for (double l : grid) {
            const auto it = std::lower_bound(table.begin(), table.end(), l,
                                             [](const auto& p, double v) { return p.wavelength < v; });
            double d = std::nan("");
            if (it != table.end() && it->wavelength == l) {
                d = it->d;
            } else if (it != table.begin() && it != table.end()) {
                const auto& a = *(it - 1);
                d = a.d + (it->d - a.d) * (l - a.wavelength) / (it->wavelength - a.wavelength);
            }
            res.reference.push_back({l, d});
        }
    }
    if (compensate) {
        const double drift_s = res.result.drift.rate_ps_per_hour * 1e-12 * sw.duration_hours;
        res.implied_temperature_change = drift_s / (fiber.temperature.coeff * res.base_rtt);
    }
    return res;
}

int cmd_cd_sweep(const CommandOptions& opts, std::ostream& out)
{
    const RunConfig cfg = resolve_config(opts);
    if (opts.out.empty()) {
        fail(ErrorCode::Config, "cd-sweep needs --out");
    }
    ensure_dir(opts.out);
    const bool compensate = cfg.sweep.compensate_drift && opts.compensate_drift;
    const SweepOutcome r = run_cd_sweep(cfg, compensate);

    json entries = json::array();
    for (std::size_t i = 0; i < r.scan.entries.size(); ++i) {
        const auto& e = r.scan.entries[i];
        json subs = json::array();
        for (const auto& s : e.subsets) {
            subs.push_back({{"wall_clock_s", s.wall_clock}, {"end_rtt_ns", ns(s.end_rtt)}});
        }
        entries.push_back({{"wavelength_nm", e.wavelength},
                           {"corrected_rtt_ns", ns(r.result.corrected[i].rtt)},
                           {"subsets", subs}});
    }
    const auto& p = r.result.poly;
    json doc{{"command", "cd-sweep"},
             {"config_hash", cfg.hash()},
             {"drift_compensated", compensate},
             {"fiber_length_km", r.scan.fiber_length_km},
             {"base_rtt_ns", ns(r.base_rtt)},
             {"injected_drift_ps_per_hour", r.injected_rate_ps_per_hour},
             {"failed_subsets", r.failed_subsets},
             {"wavelengths", entries},
             {"polynomial",
              {{"lambda0_nm", p.lambda0},
               {"b0_ns", p.b0_ns},
               {"b1_ps_per_nm", p.b1_ps_per_nm},
               {"b2_ps_per_nm2", p.b2_ps_per_nm2},
               {"fit_rms_ps", p.fit_rms_ps}}},
             {"max_abs_diff_ps_per_nm_km", r.max_abs_diff}};
    if (compensate) {
        doc["drift"] = {{"rate_ps_per_hour", r.result.drift.rate_ps_per_hour},
                        {"residual_ps", r.result.drift.residual_ps},
                        {"implied_temperature_change_degc", r.implied_temperature_change}};
    }
    write_json(opts.out / "cd_sweep.json", doc);

    auto csv = open_out(opts.out / "dispersion.csv");
    csv << "wavelength_nm,d_measured,d_reference\n";
    for (std::size_t i = 0; i < r.result.d_curve.size(); ++i) {
        csv << r.result.d_curve[i].wavelength << ',' << r.result.d_curve[i].d << ',' << r.reference[i].d << '\n';
    }
    if (!csv) {
        fail(ErrorCode::Io, "cannot write dispersion.csv");
    }
    out << doc.dump(2) << '\n';
    return kExitOk;
}

int run_guarded(const std::function<int()>& fn)
{
    try {
        return fn();
    } catch (const Error& e) {
        spdlog::error("{}: {}", to_string(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("config: {}", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitAnalysis;
    }
}

}  // namespace corrotdr::cli
