#pragma once

#include "corrotdr/cdscan.hpp"
#include "corrotdr/cli/config.hpp"
#include "corrotdr/error.hpp"
#include "corrotdr/fibersim.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace corrotdr::cli {

/// Stable process exit codes.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitIo = 3, kExitAnalysis = 4 };

int exit_code_for(ErrorCode code);

struct CommandOptions {
    std::string config_path;           // empty: built-in defaults (or the trace set's own config)
    std::filesystem::path input;       // trace set directory for analyze / rms-study
    std::filesystem::path out;         // output directory
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    bool lite = false;
    std::optional<long long> traces;
    std::optional<std::vector<std::size_t>> subset_sizes;
    bool compensate_drift = true;
    bool write_correlation = true;
};

/// Config file (or defaults), then --lite, then the individual overrides.
RunConfig resolve_config(const CommandOptions& opts);

/// Everything needed to render traces for one configuration.
struct Scenario {
    BitSequence sequence;
    SampledWaveform burst;
    SampledWaveform reference;  // transmitted segment: sequence length * samples per bit
    int samples_per_bit = 0;
    std::unique_ptr<TraceSimulator> simulator;
};

Scenario make_scenario(const RunConfig& cfg);
Scenario make_scenario(const RunConfig& cfg, const FiberModel& fiber);

/// Expected path delays for the summary and the trace set metadata.
nlohmann::json ground_truth(const FiberModel& fiber, double lambda_nm, double wall_clock);

struct SweepOutcome {
    WavelengthScan scan;
    DispersionResult result;
    std::vector<DispersionPoint> reference;  // reference D on the same grid
    double max_abs_diff = 0.0;               // ps/(nm km)
    double injected_rate_ps_per_hour = 0.0;
    double implied_temperature_change = 0.0; // degC over the sweep
    double base_rtt = 0.0;                   // s, fiber RTT at lambda0 before drift
    std::size_t failed_subsets = 0;
};

/// Simulates and analyzes the wavelength sweep in memory.
SweepOutcome run_cd_sweep(const RunConfig& cfg, bool compensate);

/// Reads a two-column (lambda nm, D ps/(nm km)) text file; '#' starts a comment.
std::vector<DispersionPoint> read_reference_curve(const std::filesystem::path& path);

int cmd_simulate(const CommandOptions& opts, std::ostream& out);
int cmd_analyze(const CommandOptions& opts, std::ostream& out);
int cmd_rms_study(const CommandOptions& opts, std::ostream& out);
int cmd_cd_sweep(const CommandOptions& opts, std::ostream& out);

/// Runs `fn`, reporting any exception on stderr and mapping it to an exit code.
int run_guarded(const std::function<int()>& fn);

}  // namespace corrotdr::cli
