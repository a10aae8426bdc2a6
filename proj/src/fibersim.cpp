#include "corrotdr/fibersim.hpp"
#include "corrotdr/dsp.hpp"
#include "corrotdr/error.hpp"
#include "corrotdr/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace corrotdr {

double TemperatureProfile::temperature_at(double wall_clock) const
{
    if (points.empty()) {
        return t_ref + drift_rate * wall_clock / 3600.0;
    }
    if (wall_clock <= points.front().first) {
        return points.front().second;
    }
    if (wall_clock >= points.back().first) {
        return points.back().second;
    }
    auto hi = std::upper_bound(points.begin(), points.end(), wall_clock,
                               [](double t, const auto& p) { return t < p.first; });
    auto lo = std::prev(hi);
    const double f = (wall_clock - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
}

void FiberModel::validate() const
{
    require(length > 0, "fiber length must be positive");
    require(group_index > 1.0 && group_index < 2.0, "group index must be in (1, 2)");
    require(attenuation >= 0, "attenuation must be non-negative");
    require(lead_in_delay >= 0, "lead-in delay must be non-negative");
    require(max_bounce_order >= 1, "max_bounce_order must be >= 1");
    require(temperature.coeff > 0, "temperature coefficient must be positive");
    for (std::size_t i = 1; i < temperature.points.size(); ++i) {
        require(temperature.points[i].first > temperature.points[i - 1].first,
                "temperature schedule times must be strictly increasing");
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        require(e.reflectivity > 0 && e.reflectivity <= 1, "reflectivity must be in (0, 1]: " + e.label);
        require(e.position >= 0 && e.position <= length, "event outside the fiber: " + e.label);
        if (i > 0) {
            require(e.position > events[i - 1].position, "event positions must be strictly increasing");
        }
    }
}

void CaptureSettings::validate() const
{
    require(sample_rate > 0, "sample rate must be positive");
    require(noise_sigma >= 0, "noise sigma must be non-negative");
    require(backscatter_level >= 0, "backscatter level must be non-negative");
    require(interp_taps >= 1 && interp_taps % 2 == 1, "interpolator tap count must be odd");
    require(kaiser_beta >= 0, "Kaiser beta must be non-negative");
    if (receiver_bandwidth > 0 && sample_rate <= 2 * receiver_bandwidth) {
        spdlog::warn("sample rate {:.3g} Hz is not above twice the receiver bandwidth {:.3g} Hz", sample_rate,
                     receiver_bandwidth);
    }
}

double one_way_delay(const FiberModel& model, double distance, double lambda_nm, double wall_clock)
{
    require(lambda_nm >= 1260.0 && lambda_nm <= 1650.0, "wavelength outside [1260, 1650] nm");
    const double base = distance * model.group_index / kSpeedOfLight;
    const double disp = distance * 1e-3 * model.dispersion.excess_delay_ps_per_km(lambda_nm) * 1e-12;
    return (base + disp) * model.temperature.delay_scale(wall_clock);
}

double group_delay_rtt(const FiberModel& model, double lambda_nm, double wall_clock)
{
    return 2.0 * one_way_delay(model, model.length, lambda_nm, wall_clock);
}

namespace {

struct PathWalker {
    const FiberModel& model;
    double lambda;
    double wall;
    std::vector<PropagationPath>& out;

    double transmit(std::size_t lo, std::size_t hi) const
    {
        // Product of (1 - R) over events with index in (lo, hi), lo excluded.
        double t = 1.0;
        for (std::size_t e = lo; e < hi; ++e) {
            t *= 1.0 - model.events[e].reflectivity;
        }
        return t;
    }

    double loss(double distance) const { return std::pow(10.0, -model.attenuation * distance * 1e-3 / 10.0); }

    // Light travelling back toward the input, having just reflected at `at`.
    void backward(std::size_t at, double amp, double dist, int bounces, const std::string& label)
    {
        const auto& ev = model.events;
        {
            const double a = amp * transmit(0, at);
            const double d = dist + ev[at].position;
            PropagationPath p;
            p.delay = model.lead_in_delay + one_way_delay(model, d, lambda, wall);
            p.amplitude = a * loss(d);
            p.label = label;
            p.bounces = bounces;
            out.push_back(std::move(p));
        }
        if (bounces + 2 > model.max_bounce_order) {
            return;
        }
        for (std::size_t j = 0; j < at; ++j) {
            const double a1 = amp * transmit(j + 1, at) * ev[j].reflectivity;
            const double d1 = dist + (ev[at].position - ev[j].position);
            for (std::size_t k = j + 1; k < ev.size(); ++k) {
                const double a2 = a1 * transmit(j + 1, k) * ev[k].reflectivity;
                const double d2 = d1 + (ev[k].position - ev[j].position);
                backward(k, a2, d2, bounces + 2, label + ">" + ev[j].label + ">" + ev[k].label);
            }
        }
    }
};

}  // namespace

std::vector<PropagationPath> enumerate_paths(const FiberModel& model, double lambda_nm, double wall_clock)
{
    model.validate();
    std::vector<PropagationPath> paths;
    PathWalker walker{model, lambda_nm, wall_clock, paths};
    for (std::size_t i = 0; i < model.events.size(); ++i) {
        const double amp = walker.transmit(0, i) * model.events[i].reflectivity;
        walker.backward(i, amp, model.events[i].position, 1, model.events[i].label);
    }
    std::stable_sort(paths.begin(), paths.end(),
                     [](const PropagationPath& a, const PropagationPath& b) { return a.delay < b.delay; });
    return paths;
}

double receiver_magnitude(const CaptureSettings& settings, double freq)
{
    if (settings.receiver_bandwidth <= 0 || settings.receiver_bandwidth >= 0.5 * settings.sample_rate) {
        return 1.0;
    }
    // Bilinear one-pole with the corner prewarped to receiver_bandwidth.
    const double wc = std::tan(std::numbers::pi * settings.receiver_bandwidth / settings.sample_rate);
    const double w = std::tan(std::numbers::pi * freq / settings.sample_rate);
    return 1.0 / std::sqrt(1.0 + (w / wc) * (w / wc));
}

std::vector<double> fractional_delay_taps(double frac, int taps, double beta)
{
    require(taps >= 1 && taps % 2 == 1, "tap count must be odd");
    const int half = taps / 2;
    std::vector<double> h(static_cast<std::size_t>(taps));
    const double i0b = std::cyl_bessel_i(0.0, beta);
    double sum = 0.0;
    for (int q = -half; q <= half; ++q) {
        const double u = q - frac;
        const double sinc = (u == 0.0) ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
        const double r = u / (half + 1);
        const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
        h[static_cast<std::size_t>(q + half)] = sinc * w;
        sum += sinc * w;
    }
    for (double& v : h) {
        v /= sum;
    }
    return h;
}

namespace {

// Circular convolution of `x` with `h` (same length), then the receiver
// magnitude response applied with zero phase.
std::vector<double> filtered_circular_convolution(const std::vector<double>& x, const std::vector<double>* h,
                                                  const CaptureSettings& settings)
{
    const std::size_t n = x.size();
    dsp::RealFft fx(n);
    std::copy(x.begin(), x.end(), fx.real());
    fx.forward();
    std::vector<std::complex<double>> hs;
    if (h) {
        dsp::RealFft fh(n);
        std::copy(h->begin(), h->end(), fh.real());
        fh.forward();
        hs.assign(fh.spectrum(), fh.spectrum() + fh.spectrum_size());
    }
    auto* s = fx.spectrum();
    for (std::size_t k = 0; k < fx.spectrum_size(); ++k) {
        const double f = static_cast<double>(k) * settings.sample_rate / static_cast<double>(n);
        s[k] *= receiver_magnitude(settings, f) / static_cast<double>(n);
        if (h) {
            s[k] *= hs[k];
        }
    }
    fx.inverse();
    return std::vector<double>(fx.real(), fx.real() + n);
}

}  // namespace

std::vector<double> backscatter(const FiberModel& model, const SampledWaveform& burst, const CaptureSettings& settings)
{
    const std::size_t n = burst.size();
    std::vector<double> out(n, 0.0);
    if (settings.backscatter_level <= 0 || n == 0) {
        return out;
    }
    model.validate();

    const double lambda = model.dispersion.lambda0;
    const double rtt = group_delay_rtt(model, lambda, 0.0);
    const double fs = settings.sample_rate;
    const auto j0 = static_cast<std::size_t>(std::ceil(model.lead_in_delay * fs));
    const auto j1 = static_cast<std::size_t>(std::floor((model.lead_in_delay + rtt) * fs));

    // Speckle intensity: one exponential draw per resolved segment, frozen by the fiber seed.
    std::mt19937_64 rng(mix_seed(model.speckle_seed, 0x6273u));
    std::exponential_distribution<double> speckle(1.0);
    std::vector<double> ir(n, 0.0);
    for (std::size_t j = j0; j <= j1 && j < n; ++j) {
        const double z = (static_cast<double>(j) / fs - model.lead_in_delay) / rtt * model.length;
        double t2 = 1.0;
        for (const auto& e : model.events) {
            if (e.position < z) {
                t2 *= (1.0 - e.reflectivity) * (1.0 - e.reflectivity);
            }
        }
        const double loss = std::pow(10.0, -model.attenuation * 2.0 * z * 1e-3 / 10.0);
        ir[j] = settings.backscatter_level * speckle(rng) * t2 * loss;
    }
    return filtered_circular_convolution(burst.samples, &ir, settings);
}

TraceSimulator::TraceSimulator(FiberModel model, SampledWaveform burst, CaptureSettings settings)
    : model_(std::move(model)), burst_(std::move(burst)), settings_(settings)
{
    model_.validate();
    settings_.validate();
    require(!burst_.samples.empty(), "empty burst");
    require(std::abs(burst_.sample_rate - settings_.sample_rate) <= 1e-9 * settings_.sample_rate,
            "burst must be rendered at the capture sample rate");

    floor_ = *std::min_element(burst_.samples.begin(), burst_.samples.end());
    std::size_t active = 0;
    for (std::size_t i = 0; i < burst_.size(); ++i) {
        if (burst_.samples[i] > floor_) {
            active = i + 1;
        }
    }

    rx_enabled_ = settings_.receiver_bandwidth > 0 && settings_.receiver_bandwidth < 0.5 * settings_.sample_rate;
    if (rx_enabled_) {
        const double wc = std::tan(std::numbers::pi * settings_.receiver_bandwidth / settings_.sample_rate);
        rx_b0_ = wc / (1.0 + wc);
        rx_a1_ = (wc - 1.0) / (1.0 + wc);
    }

    // Pulse template: modulated part of the burst, padded on both sides so the
    // zero-phase receiver response and interpolator tails fit.
    pulse_pad_ = 64 + settings_.interp_taps;
    const std::size_t tlen = active + 2 * static_cast<std::size_t>(pulse_pad_);
    std::vector<double> padded(dsp::good_fft_size(tlen), 0.0);
    for (std::size_t i = 0; i < active; ++i) {
        padded[i + static_cast<std::size_t>(pulse_pad_)] = burst_.samples[i] - floor_;
    }
    if (rx_enabled_) {
        padded = filtered_circular_convolution(padded, nullptr, settings_);
    }
    padded.resize(tlen);
    pulse_ = std::move(padded);

    backscatter_ = backscatter(model_, burst_, settings_);

    const double period = static_cast<double>(burst_.size()) / settings_.sample_rate;
    const double pulse_span = static_cast<double>(active) / settings_.sample_rate;
    const double fiber_rtt = group_delay_rtt(model_, model_.dispersion.lambda0, 0.0);
    if (period < 2.0 * fiber_rtt) {
        spdlog::warn("burst period {:.4g} s is shorter than twice the fiber round trip {:.4g} s", period, fiber_rtt);
    }
    for (const auto& p : enumerate_paths(model_, model_.dispersion.lambda0, 0.0)) {
        if (p.delay + pulse_span > period) {
            spdlog::warn("path '{}' ({:.6g} s) wraps into the next burst period", p.label, p.delay);
        }
    }
}

void TraceSimulator::add_path(double delay, double amplitude, std::vector<double>& out) const
{
    const auto n = static_cast<std::ptrdiff_t>(out.size());
    const double d = delay * settings_.sample_rate * (1.0 + settings_.clock_error_ppm * 1e-6);
    const double whole = std::round(d);
    const double frac = d - whole;
    const auto shift = static_cast<std::ptrdiff_t>(whole);
    const int half = settings_.interp_taps / 2;
    const auto taps = fractional_delay_taps(frac, settings_.interp_taps, settings_.kaiser_beta);
    const auto tlen = static_cast<std::ptrdiff_t>(pulse_.size());

    // y[k'] = sum_q x[k' - q] h(q - frac), x indexed by template position.
    for (std::ptrdiff_t kp = half; kp < tlen - half; ++kp) {
        double acc = 0.0;
        for (int q = -half; q <= half; ++q) {
            acc += pulse_[static_cast<std::size_t>(kp - q)] * taps[static_cast<std::size_t>(q + half)];
        }
        std::ptrdiff_t idx = (shift + kp - pulse_pad_) % n;
        if (idx < 0) {
            idx += n;
        }
        out[static_cast<std::size_t>(idx)] += amplitude * acc;
    }
}

void TraceSimulator::render_noiseless(double wall_clock, double lambda_nm, std::vector<double>& out) const
{
    const auto paths = enumerate_paths(model_, lambda_nm, wall_clock);
    double total = 0.0;
    for (const auto& p : paths) {
        total += p.amplitude;
    }
    out.assign(burst_.size(), floor_ * total);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += backscatter_[i];
    }
    for (const auto& p : paths) {
        add_path(p.delay, p.amplitude, out);
    }
}

void TraceSimulator::add_noise(std::uint64_t trace_index, std::vector<double>& out) const
{
    if (settings_.noise_sigma <= 0) {
        return;
    }
    std::mt19937_64 rng(mix_seed(settings_.rng_seed, trace_index));
    NormalSource normal(settings_.noise_sigma);
    if (!rx_enabled_) {
        for (double& v : out) {
            v += normal(rng);
        }
        return;
    }
    // Start the recursion in its stationary state so the first samples are
    // not quieter than the rest.
    const double b0 = rx_b0_;
    const double a1 = rx_a1_;
    const double stationary = settings_.noise_sigma * std::sqrt(2.0 * b0 * b0 / (1.0 + a1));
    double x1 = normal(rng);
    double y1 = stationary / settings_.noise_sigma * normal(rng);
    for (double& v : out) {
        const double x = normal(rng);
        const double y = b0 * (x + x1) - a1 * y1;
        x1 = x;
        y1 = y;
        v += y;
    }
}

void TraceSimulator::simulate_into(double wall_clock, double lambda_nm, std::uint64_t trace_index,
                                   std::vector<double>& out) const
{
    render_noiseless(wall_clock, lambda_nm, out);
    add_noise(trace_index, out);
    // ADC output is single precision.
    for (double& v : out) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

Trace TraceSimulator::simulate(double wall_clock, double lambda_nm, std::uint64_t trace_index) const
{
    Trace t;
    t.wall_clock = wall_clock;
    t.wavelength = lambda_nm;
    t.waveform.sample_rate = settings_.sample_rate;
    t.waveform.t0 = 0.0;
    simulate_into(wall_clock, lambda_nm, trace_index, t.waveform.samples);
    return t;
}

Trace simulate_trace(const FiberModel& model, const SampledWaveform& burst, const CaptureSettings& settings,
                     double wall_clock, double lambda_nm, std::uint64_t trace_index)
{
    return TraceSimulator(model, burst, settings).simulate(wall_clock, lambda_nm, trace_index);
}

}  // namespace corrotdr
