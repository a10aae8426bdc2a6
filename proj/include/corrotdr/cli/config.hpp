#pragma once

#include "corrotdr/fibersim.hpp"
#include "corrotdr/pipeline.hpp"
#include "corrotdr/seqgen.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace corrotdr::cli {

struct SequenceConfig {
    int order = 7;
    std::uint32_t polynomial = 0x60;  // x^7 + x^6 + 1
    std::uint32_t seed = 0x7f;
};

struct RunSettings {
    std::size_t traces = 1000;
    double wavelength_nm = 1550.0;
    double trace_interval_s = 1.8;
    int jobs = 1;
};

struct SweepConfig {
    std::vector<double> wavelengths_nm{1530.0, 1535.8333333333333, 1541.6666666666667, 1547.5,
                                       1553.3333333333333, 1559.1666666666667, 1565.0};
    std::size_t traces_per_wavelength = 1000;
    std::size_t subset_size = 250;
    double duration_hours = 3.5;
    bool compensate_drift = true;
    std::size_t grid_points = 36;
    std::string reference_curve;  // optional two-column file; empty uses the fiber's own dispersion
    double drift_ps = 120.0;            // RTT drift injected over the sweep via the temperature ramp
    double end_reflectivity = 0.0398;   // open connector at the fiber end; <= 0 keeps the configured events
};

struct RunConfig {
    SequenceConfig sequence;
    BurstSpec burst;
    FiberModel fiber;
    CaptureSettings capture;
    PipelineConfig pipeline;
    std::vector<std::size_t> subset_sizes{50, 100, 250, 500};
    RunSettings run;
    SweepConfig sweep;

    /// Canonical JSON (every field, defaults filled in).
    nlohmann::json to_json() const;
    /// 16 hex digits, FNV-1a over the canonical JSON dump.
    std::string hash() const;
};

/// Built-in defaults: the 2.2 km / 10 Gbit/s / 40 GS/s measurement geometry.
RunConfig default_config();

/// Parses a config document on top of the defaults. Unknown keys and invalid
/// values throw Error(Config) with the offending path in the message.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// Desk-scale preset: period and fiber length divided by four (attenuation
/// scaled to keep the total loss), 100 traces.
void apply_lite(RunConfig& cfg);

/// Fiber length giving `rtt` seconds of round trip at lambda0 and t_ref.
double length_for_rtt(double rtt, double group_index);

std::uint64_t fnv1a64(const std::string& data);

}  // namespace corrotdr::cli
