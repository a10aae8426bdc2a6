#pragma once

#include "corrotdr/seqgen.hpp"
#include "corrotdr/waveform.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace corrotdr {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

struct ReflectionEvent {
    double position = 0.0;      // m from the fiber input
    double reflectivity = 0.0;  // linear power ratio, (0, 1]
    std::string label;
};

/// Linear dispersion model D(lambda) = d0 + s0 * (lambda - lambda0).
struct DispersionParams {
    double d0 = 16.5;        // ps/(nm km)
    double s0 = 0.058;       // ps/(nm^2 km)
    double lambda0 = 1550.0; // nm

    double at(double lambda_nm) const { return d0 + s0 * (lambda_nm - lambda0); }
    /// Integral of D from lambda0 to lambda: extra one-way delay per km, ps/km.
    double excess_delay_ps_per_km(double lambda_nm) const
    {
        const double x = lambda_nm - lambda0;
        return d0 * x + 0.5 * s0 * x * x;
    }
};

struct TemperatureProfile {
    double t_ref = 20.0;       // degC
    double drift_rate = 0.0;   // degC per hour, used when `points` is empty
    /// Optional piecewise-linear (wall_clock s, degC) schedule; clamped at the ends.
    std::vector<std::pair<double, double>> points;
    double coeff = 7e-6;       // relative delay change per degC

    double temperature_at(double wall_clock) const;
    double delay_scale(double wall_clock) const { return 1.0 + coeff * (temperature_at(wall_clock) - t_ref); }
};

struct FiberModel {
    double length = 2200.0;         // m
    double group_index = 1.4682;    // at lambda0
    double attenuation = 0.2;       // dB/km
    double lead_in_delay = 0.0;     // s, coupler to fiber input and back
    std::vector<ReflectionEvent> events;
    DispersionParams dispersion;
    TemperatureProfile temperature;
    int max_bounce_order = 3;
    std::uint64_t speckle_seed = 1;  // fixes the backscatter impulse response

    void validate() const;
};

struct CaptureSettings {
    double sample_rate = 40e9;
    double noise_sigma = 0.0;          // additive white Gaussian, before the receiver filter
    double clock_error_ppm = 0.0;
    double receiver_bandwidth = 7.5e9; // Hz; <= 0 disables the receiver filter
    double backscatter_level = 0.0;    // per resolved segment; 0 disables
    std::uint64_t rng_seed = 1;
    int interp_taps = 31;              // windowed-sinc fractional delay length (odd)
    double kaiser_beta = 8.0;

    void validate() const;
};

struct Trace {
    SampledWaveform waveform;
    double wall_clock = 0.0;  // s since scan start
    double wavelength = 1550.0;
};

struct PropagationPath {
    double delay = 0.0;      // s, receiver-referenced round trip
    double amplitude = 0.0;  // linear intensity scale
    std::string label;
    int bounces = 0;
};

/// One-way group delay over `distance` metres of fiber.
double one_way_delay(const FiberModel& model, double distance, double lambda_nm, double wall_clock);

/// Round-trip group delay of the whole fiber (lead-in excluded).
double group_delay_rtt(const FiberModel& model, double lambda_nm, double wall_clock);

/// Every reflection path with at most `max_bounce_order` reflections, sorted by delay.
std::vector<PropagationPath> enumerate_paths(const FiberModel& model, double lambda_nm, double wall_clock);

/// Static backscatter contribution for one full period of `burst`.
std::vector<double> backscatter(const FiberModel& model, const SampledWaveform& burst, const CaptureSettings& settings);

/// Renders received traces for one fiber, burst and capture configuration.
/// Everything expensive (receiver-filtered pulse template, backscatter) is
/// computed once at construction; simulate() is const and reentrant.
class TraceSimulator {
public:
    TraceSimulator(FiberModel model, SampledWaveform burst, CaptureSettings settings);

    const FiberModel& model() const { return model_; }
    const CaptureSettings& settings() const { return settings_; }
    const SampledWaveform& burst() const { return burst_; }
    std::size_t trace_length() const { return burst_.size(); }

    Trace simulate(double wall_clock, double lambda_nm, std::uint64_t trace_index = 0) const;

    /// Noiseless part only; `out` is resized to one period.
    void render_noiseless(double wall_clock, double lambda_nm, std::vector<double>& out) const;

    /// Full trace into a caller-owned buffer (no allocation after the first call).
    void simulate_into(double wall_clock, double lambda_nm, std::uint64_t trace_index, std::vector<double>& out) const;

private:
    void add_path(double delay, double amplitude, std::vector<double>& out) const;
    void add_noise(std::uint64_t trace_index, std::vector<double>& out) const;

    FiberModel model_;
    SampledWaveform burst_;
    CaptureSettings settings_;
    double floor_ = 0.0;
    std::vector<double> pulse_;       // receiver-filtered modulated part, padded
    std::ptrdiff_t pulse_pad_ = 0;
    std::vector<double> backscatter_;
    // Bilinear one-pole receiver: y = b0 (x + x1) - a1 y1.
    double rx_b0_ = 1.0;
    double rx_a1_ = 0.0;
    bool rx_enabled_ = false;
};

/// Convenience wrapper for a single trace.
Trace simulate_trace(const FiberModel& model, const SampledWaveform& burst, const CaptureSettings& settings,
                     double wall_clock, double lambda_nm, std::uint64_t trace_index = 0);

/// Magnitude of the receiver response at `freq` (Hz).
double receiver_magnitude(const CaptureSettings& settings, double freq);

/// Windowed-sinc taps h[q] for q in [-taps/2, taps/2] realizing a delay of
/// `frac` samples (|frac| <= 0.5). Normalized to unit DC gain.
std::vector<double> fractional_delay_taps(double frac, int taps, double beta);

}  // namespace corrotdr
