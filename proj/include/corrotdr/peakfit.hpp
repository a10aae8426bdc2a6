#pragma once

#include "corrotdr/corrproc.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace corrotdr {

struct PeakIndex {
    std::size_t index = 0;
    double value = 0.0;
};

/// Local maxima above threshold_rel * global max (and above min_snr times a
/// MAD noise estimate when min_snr > 0), picked greedily by height with a
/// min_separation exclusion zone, returned in lag order.
std::vector<PeakIndex> detect_peaks(const CorrelationResult& corr, double threshold_rel, double min_separation,
                                    std::size_t max_peaks, double min_snr = 0.0);

struct PeakEstimate {
    double center = 0.0;     // s
    double width = 0.0;      // s, Gaussian sigma
    double amplitude = 0.0;
    double offset = 0.0;
    double residual_rms = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Gaussian model in local sample coordinates, p = {center, width, amplitude, offset}.
using GaussParams = std::array<double, 4>;
double gaussian_model(const GaussParams& p, double x);
std::array<double, 4> gaussian_jacobian(const GaussParams& p, double x);

struct GaussFitResult {
    GaussParams params{};  // local sample coordinates
    double residual_rms = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Levenberg-Marquardt fit of `y` sampled at `x`. Throws FitDegenerate for a
/// flat window.
GaussFitResult fit_gaussian_samples(std::span<const double> x, std::span<const double> y, int max_iterations = 200,
                                    double step_tolerance = 1e-10);

/// Fits the window [peak_index - halfwidth, peak_index + halfwidth].
PeakEstimate fit_gaussian(const CorrelationResult& corr, std::size_t peak_index, std::size_t window_halfwidth);

struct LatencyReport {
    double input_rtt = 0.0;
    double end_rtt = 0.0;
    std::optional<double> triple_rtt;
    std::optional<double> consistency_error;  // triple - (2 end - input)
    double fiber_rtt = 0.0;                   // end - input
};

/// Assigns input / end / triple by time order. Throws InsufficientPeaks for
/// fewer than two peaks.
LatencyReport latency_report(std::span<const PeakEstimate> peaks);

}  // namespace corrotdr
