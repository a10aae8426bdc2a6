#include "corrotdr/cli/config.hpp"
#include "corrotdr/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace corrotdr::cli {

using nlohmann::json;

namespace {

// Wraps one JSON object; every key must be read exactly through get()/has()
// before finish(), which rejects anything left over.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object()) {
            fail(ErrorCode::Config, path_ + ": expected an object");
        }
    }

    bool has(const std::string& key)
    {
        seen_.insert(key);
        return obj_.contains(key);
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        if (!has(key)) {
            return;
        }
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(ErrorCode::Config, path_ + "." + key + ": " + e.what());
        }
    }

    const json& raw(const std::string& key) const { return obj_.at(key); }
    std::string where(const std::string& key) const { return path_ + "." + key; }

    void finish() const
    {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) {
                fail(ErrorCode::Config, path_ + ": unknown key '" + it.key() + "'");
            }
        }
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

void check(bool cond, const std::string& what)
{
    if (!cond) {
        fail(ErrorCode::Config, what);
    }
}

double parse_er(const json& v, const std::string& where)
{
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        check(s == "inf" || s == "infinity", where + ": expected a number or \"inf\"");
        return std::numeric_limits<double>::infinity();
    }
    check(v.is_number(), where + ": expected a number or \"inf\"");
    return v.get<double>();
}

std::uint32_t parse_mask(const json& v, const std::string& where)
{
    if (v.is_string()) {
        try {
            return static_cast<std::uint32_t>(std::stoul(v.get<std::string>(), nullptr, 0));
        } catch (const std::exception&) {
            fail(ErrorCode::Config, where + ": cannot parse tap mask");
        }
    }
    check(v.is_number_unsigned(), where + ": expected an unsigned integer or hex string");
    return v.get<std::uint32_t>();
}

std::string hex_mask(std::uint32_t m)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%x", m);
    return buf;
}

}  // namespace

double length_for_rtt(double rtt, double group_index) { return rtt * kSpeedOfLight / (2.0 * group_index); }

std::uint64_t fnv1a64(const std::string& data)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

RunConfig default_config()
{
    RunConfig cfg;
    cfg.burst.bit_rate = 10e9;
    cfg.burst.period = 50e-6;
    cfg.burst.sample_rate = 40e9;
    cfg.burst.extinction_ratio_db = 13.0;
    cfg.burst.peak_level = 1.0;

    auto& f = cfg.fiber;
    f.group_index = 1.4682;
    // Input reflection at 94.2372 ns and fiber-end reflection at 21733.1958 ns.
    f.lead_in_delay = 94.2372e-9;
    f.length = length_for_rtt(21733.1958e-9 - 94.2372e-9, f.group_index);
    f.attenuation = 0.2;
    f.events = {{0.0, 0.0398, "air-gap"}, {f.length, 0.9, "fiber-end"}};
    f.max_bounce_order = 3;

    cfg.capture.sample_rate = cfg.burst.sample_rate;
    cfg.capture.receiver_bandwidth = 7.5e9;
    // Calibrated: subsets of 100 averages give about 3.25 ps triple-consistency RMS.
    cfg.capture.noise_sigma = 0.0963;
    cfg.capture.backscatter_level = 1e-6;
    return cfg;
}

json RunConfig::to_json() const
{
    json j;
    j["sequence"] = {{"order", sequence.order}, {"polynomial", hex_mask(sequence.polynomial)}, {"seed", sequence.seed}};
    json er = std::isinf(burst.extinction_ratio_db) ? json("inf") : json(burst.extinction_ratio_db);
    j["burst"] = {{"bit_rate", burst.bit_rate},
                  {"period", burst.period},
                  {"sample_rate", burst.sample_rate},
                  {"extinction_ratio_db", er},
                  {"peak_level", burst.peak_level}};
    json events = json::array();
    for (const auto& e : fiber.events) {
        events.push_back({{"position_m", e.position}, {"reflectivity", e.reflectivity}, {"label", e.label}});
    }
    json schedule = json::array();
    for (const auto& [t, v] : fiber.temperature.points) {
        schedule.push_back({t, v});
    }
    j["fiber"] = {{"length_m", fiber.length},
                  {"group_index", fiber.group_index},
                  {"attenuation_db_per_km", fiber.attenuation},
                  {"lead_in_delay_s", fiber.lead_in_delay},
                  {"events", events},
                  {"dispersion", {{"d0", fiber.dispersion.d0}, {"s0", fiber.dispersion.s0}, {"lambda0", fiber.dispersion.lambda0}}},
                  {"temperature",
                   {{"t_ref", fiber.temperature.t_ref},
                    {"drift_rate_degc_per_hour", fiber.temperature.drift_rate},
                    {"schedule", schedule},
                    {"coeff", fiber.temperature.coeff}}},
                  {"max_bounce_order", fiber.max_bounce_order},
                  {"speckle_seed", fiber.speckle_seed}};
    j["capture"] = {{"noise_sigma", capture.noise_sigma},
                    {"clock_error_ppm", capture.clock_error_ppm},
                    {"receiver_bandwidth_hz", capture.receiver_bandwidth},
                    {"backscatter_level", capture.backscatter_level},
                    {"interp_taps", capture.interp_taps},
                    {"kaiser_beta", capture.kaiser_beta}};
    j["pipeline"] = {{"threshold_rel", pipeline.threshold_rel},
                     {"min_snr", pipeline.min_snr},
                     {"min_separation_s", pipeline.min_separation},
                     {"max_peaks", pipeline.max_peaks},
                     {"window_halfwidth", pipeline.window_halfwidth},
                     {"regularization", pipeline.regularization},
                     {"mapping", pipeline.mapping == ReferenceMapping::Unipolar ? "unipolar" : "zero-mean"},
                     {"candidate_factor", pipeline.candidate_factor},
                     {"width_tolerance", pipeline.width_tolerance},
                     {"sidelobe_margin", pipeline.sidelobe_margin},
                     {"subset_sizes", subset_sizes}};
    j["run"] = {{"traces", run.traces},
                {"wavelength_nm", run.wavelength_nm},
                {"trace_interval_s", run.trace_interval_s},
                {"seed", capture.rng_seed}};
    j["sweep"] = {{"wavelengths_nm", sweep.wavelengths_nm},
                  {"traces_per_wavelength", sweep.traces_per_wavelength},
                  {"subset_size", sweep.subset_size},
                  {"duration_hours", sweep.duration_hours},
                  {"compensate_drift", sweep.compensate_drift},
                  {"grid_points", sweep.grid_points},
                  {"reference_curve", sweep.reference_curve},
                  {"drift_ps", sweep.drift_ps},
                  {"end_reflectivity", sweep.end_reflectivity}};
    return j;
}

std::string RunConfig::hash() const
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

RunConfig parse_config(const json& doc)
{
    RunConfig cfg = default_config();
    Section top(doc, "config");

    if (top.has("sequence")) {
        Section s(top.raw("sequence"), "sequence");
        s.get("order", cfg.sequence.order);
        bool poly_given = false;
        if (s.has("polynomial")) {
            cfg.sequence.polynomial = parse_mask(s.raw("polynomial"), s.where("polynomial"));
            poly_given = true;
        }
        s.get("seed", cfg.sequence.seed);
        s.finish();
        check(cfg.sequence.order >= 3 && cfg.sequence.order <= 31, "sequence.order must be in [3, 31]");
        if (!poly_given) {
            cfg.sequence.polynomial = default_polynomial(cfg.sequence.order);
        }
        check(cfg.sequence.seed != 0, "sequence.seed must be nonzero");
    }

    if (top.has("burst")) {
        Section s(top.raw("burst"), "burst");
        s.get("bit_rate", cfg.burst.bit_rate);
        s.get("period", cfg.burst.period);
        s.get("sample_rate", cfg.burst.sample_rate);
        if (s.has("extinction_ratio_db")) {
            cfg.burst.extinction_ratio_db = parse_er(s.raw("extinction_ratio_db"), s.where("extinction_ratio_db"));
        }
        s.get("peak_level", cfg.burst.peak_level);
        s.finish();
    }
    cfg.capture.sample_rate = cfg.burst.sample_rate;

    if (top.has("fiber")) {
        Section s(top.raw("fiber"), "fiber");
        auto& f = cfg.fiber;
        const double old_length = f.length;
        s.get("group_index", f.group_index);
        const bool has_len = s.has("length_m");
        const bool has_rtt = s.has("fiber_rtt_s");
        check(!(has_len && has_rtt), "fiber: give length_m or fiber_rtt_s, not both");
        if (has_len) {
            s.get("length_m", f.length);
        } else if (has_rtt) {
            double rtt = 0.0;
            s.get("fiber_rtt_s", rtt);
            check(rtt > 0, "fiber.fiber_rtt_s must be positive");
            f.length = length_for_rtt(rtt, f.group_index);
        }
        s.get("attenuation_db_per_km", f.attenuation);
        s.get("lead_in_delay_s", f.lead_in_delay);
        s.get("max_bounce_order", f.max_bounce_order);
        s.get("speckle_seed", f.speckle_seed);
        if (s.has("events")) {
            const json& ev = s.raw("events");
            check(ev.is_array(), "fiber.events must be an array");
            f.events.clear();
            for (std::size_t i = 0; i < ev.size(); ++i) {
                Section e(ev[i], "fiber.events[" + std::to_string(i) + "]");
                ReflectionEvent re;
                if (e.has("position_m")) {
                    const json& p = e.raw("position_m");
                    if (p.is_string() && p.get<std::string>() == "end") {
                        re.position = f.length;
                    } else {
                        check(p.is_number(), e.where("position_m") + ": expected a number or \"end\"");
                        re.position = p.get<double>();
                    }
                } else {
                    fail(ErrorCode::Config, e.where("position_m") + ": required");
                }
                e.get("reflectivity", re.reflectivity);
                e.get("label", re.label);
                e.finish();
                f.events.push_back(re);
            }
        } else {
            // Default events track the fiber end when only the length changes.
            for (auto& e : f.events) {
                if (e.position == old_length) {
                    e.position = f.length;
                }
            }
        }
        if (s.has("dispersion")) {
            Section d(s.raw("dispersion"), "fiber.dispersion");
            d.get("d0", f.dispersion.d0);
            d.get("s0", f.dispersion.s0);
            d.get("lambda0", f.dispersion.lambda0);
            d.finish();
        }
        if (s.has("temperature")) {
            Section t(s.raw("temperature"), "fiber.temperature");
            t.get("t_ref", f.temperature.t_ref);
            t.get("drift_rate_degc_per_hour", f.temperature.drift_rate);
            t.get("coeff", f.temperature.coeff);
            if (t.has("schedule")) {
                const json& sch = t.raw("schedule");
                check(sch.is_array(), "fiber.temperature.schedule must be an array of [time_s, degC]");
                f.temperature.points.clear();
                for (const auto& p : sch) {
                    check(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number(),
                          "fiber.temperature.schedule entries must be [time_s, degC]");
                    f.temperature.points.emplace_back(p[0].get<double>(), p[1].get<double>());
                }
            }
            t.finish();
        }
        s.finish();
    }

    if (top.has("capture")) {
        Section s(top.raw("capture"), "capture");
        s.get("noise_sigma", cfg.capture.noise_sigma);
        s.get("clock_error_ppm", cfg.capture.clock_error_ppm);
        s.get("receiver_bandwidth_hz", cfg.capture.receiver_bandwidth);
        s.get("backscatter_level", cfg.capture.backscatter_level);
        s.get("interp_taps", cfg.capture.interp_taps);
        s.get("kaiser_beta", cfg.capture.kaiser_beta);
        s.finish();
    }

    if (top.has("pipeline")) {
        Section s(top.raw("pipeline"), "pipeline");
        auto& p = cfg.pipeline;
        s.get("threshold_rel", p.threshold_rel);
        s.get("min_snr", p.min_snr);
        s.get("min_separation_s", p.min_separation);
        s.get("max_peaks", p.max_peaks);
        s.get("window_halfwidth", p.window_halfwidth);
        s.get("regularization", p.regularization);
        if (s.has("mapping")) {
            const json& m = s.raw("mapping");
            check(m.is_string(), "pipeline.mapping must be \"unipolar\" or \"zero-mean\"");
            const auto v = m.get<std::string>();
            check(v == "unipolar" || v == "zero-mean", "pipeline.mapping must be \"unipolar\" or \"zero-mean\"");
            p.mapping = v == "unipolar" ? ReferenceMapping::Unipolar : ReferenceMapping::ZeroMean;
        }
        s.get("candidate_factor", p.candidate_factor);
        s.get("width_tolerance", p.width_tolerance);
        s.get("sidelobe_margin", p.sidelobe_margin);
        s.get("subset_sizes", cfg.subset_sizes);
        s.finish();
    }

    if (top.has("run")) {
        Section s(top.raw("run"), "run");
        s.get("traces", cfg.run.traces);
        s.get("wavelength_nm", cfg.run.wavelength_nm);
        s.get("trace_interval_s", cfg.run.trace_interval_s);
        s.get("seed", cfg.capture.rng_seed);
        s.finish();
    }

    if (top.has("sweep")) {
        Section s(top.raw("sweep"), "sweep");
        s.get("wavelengths_nm", cfg.sweep.wavelengths_nm);
        s.get("traces_per_wavelength", cfg.sweep.traces_per_wavelength);
        s.get("subset_size", cfg.sweep.subset_size);
        s.get("duration_hours", cfg.sweep.duration_hours);
        s.get("compensate_drift", cfg.sweep.compensate_drift);
        s.get("grid_points", cfg.sweep.grid_points);
        s.get("reference_curve", cfg.sweep.reference_curve);
        s.get("drift_ps", cfg.sweep.drift_ps);
        s.get("end_reflectivity", cfg.sweep.end_reflectivity);
        s.finish();
    }
    top.finish();

    // Semantic validation of the assembled model.
    try {
        cfg.burst.validate(std::size_t{1} << cfg.sequence.order);
        cfg.fiber.validate();
        cfg.capture.validate();
    } catch (const Error& e) {
        fail(ErrorCode::Config, e.what());
    }
    check(cfg.run.traces >= 1, "run.traces must be at least 1");
    check(cfg.run.trace_interval_s >= 0, "run.trace_interval_s must be non-negative");
    check(cfg.run.wavelength_nm >= 1260 && cfg.run.wavelength_nm <= 1650, "run.wavelength_nm outside [1260, 1650]");
    check(cfg.pipeline.threshold_rel > 0 && cfg.pipeline.threshold_rel < 1, "pipeline.threshold_rel must be in (0, 1)");
    check(cfg.pipeline.window_halfwidth >= 2, "pipeline.window_halfwidth must be >= 2");
    check(cfg.pipeline.max_peaks >= 2, "pipeline.max_peaks must be >= 2");
    check(cfg.pipeline.candidate_factor >= 1, "pipeline.candidate_factor must be >= 1");
    check(cfg.pipeline.sidelobe_margin >= 0, "pipeline.sidelobe_margin must be non-negative");
    check(cfg.pipeline.width_tolerance > 0, "pipeline.width_tolerance must be positive");
    check(cfg.pipeline.regularization >= 0, "pipeline.regularization must be >= 0");
    for (auto s : cfg.subset_sizes) {
        check(s >= 1, "pipeline.subset_sizes entries must be >= 1");
    }
    check(cfg.sweep.subset_size >= 1, "sweep.subset_size must be >= 1");
    check(cfg.sweep.duration_hours > 0, "sweep.duration_hours must be positive");
    check(cfg.sweep.end_reflectivity <= 1.0, "sweep.end_reflectivity must be <= 1");
    check(cfg.sweep.grid_points >= 2, "sweep.grid_points must be >= 2");
    for (double l : cfg.sweep.wavelengths_nm) {
        check(l >= 1260 && l <= 1650, "sweep.wavelengths_nm entries outside [1260, 1650]");
    }
    return cfg;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::Config, "cannot open config file " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorCode::Config, path + ": " + e.what());
    }
    return parse_config(doc);
}

void apply_lite(RunConfig& cfg)
{
    cfg.burst.period /= 4.0;
    const double old_length = cfg.fiber.length;
    cfg.fiber.length /= 4.0;
    for (auto& e : cfg.fiber.events) {
        e.position *= cfg.fiber.length / old_length;
    }
    // Same end-to-end loss, so peak SNR matches the full geometry.
    cfg.fiber.attenuation *= 4.0;
    cfg.run.traces = 100;
    cfg.sweep.traces_per_wavelength = 100;
    cfg.sweep.subset_size = 25;
    cfg.subset_sizes = {10, 25, 50};
}

}  // namespace corrotdr::cli
