#pragma once

#include "corrotdr/fibersim.hpp"

#include <span>
#include <utility>
#include <vector>

namespace corrotdr {

// All latencies here are round-trip. Dispersion divides the RTT slope by
// twice the fiber length.

struct SubsetLatency {
    double wall_clock = 0.0;  // s since scan start
    double end_rtt = 0.0;     // s
};

struct WavelengthEntry {
    double wavelength = 0.0;  // nm
    std::vector<SubsetLatency> subsets;
};

struct WavelengthScan {
    std::vector<WavelengthEntry> entries;
    double fiber_length_km = 0.0;
};

struct DriftModel {
    double rate_ps_per_hour = 0.0;
    std::vector<double> offsets;  // per wavelength entry, s
    double residual_ps = 0.0;     // RMS residual of the drift fit
};

/// Global linear-in-time drift with a free constant per wavelength.
/// Throws DegenerateDrift if no wavelength has subsets at distinct times.
DriftModel estimate_drift(const WavelengthScan& scan);

struct LatencyPoint {
    double wavelength = 0.0;  // nm
    double rtt = 0.0;         // s
};

/// Removes rate * wall_clock from each subset and averages per wavelength.
std::vector<LatencyPoint> compensate_drift(const WavelengthScan& scan, const DriftModel& drift);

/// Plain per-wavelength subset averages (no drift removal).
std::vector<LatencyPoint> average_subsets(const WavelengthScan& scan);

/// RTT(lambda) = b0 + b1 (lambda - lambda0) + b2 (lambda - lambda0)^2.
struct LatencyPolynomial {
    double b0_ns = 0.0;
    double b1_ps_per_nm = 0.0;
    double b2_ps_per_nm2 = 0.0;
    double lambda0 = 1550.0;
    double fit_rms_ps = 0.0;

    double rtt_ps(double lambda_nm) const;
    double slope_ps_per_nm(double lambda_nm) const { return b1_ps_per_nm + 2.0 * b2_ps_per_nm2 * (lambda_nm - lambda0); }
};

LatencyPolynomial fit_latency_polynomial(std::span<const LatencyPoint> points, double lambda0 = 1550.0);

struct DispersionPoint {
    double wavelength = 0.0;  // nm
    double d = 0.0;           // ps/(nm km)
};

std::vector<DispersionPoint> compute_dispersion(const LatencyPolynomial& poly, double fiber_length_km,
                                                std::span<const double> wavelengths);

/// Evenly spaced grid, inclusive of both ends.
std::vector<double> wavelength_grid(double lo, double hi, std::size_t n);

/// max |D_measured - D_ref| over the measured points.
double compare_with_reference(std::span<const DispersionPoint> measured, const DispersionParams& reference);

/// Against a tabulated curve (linear interpolation); points outside the
/// table's range are skipped. Throws if nothing overlaps.
double compare_with_reference(std::span<const DispersionPoint> measured, std::span<const DispersionPoint> reference);

struct DispersionResult {
    LatencyPolynomial poly;
    std::vector<DispersionPoint> d_curve;
    DriftModel drift;
    bool drift_compensated = true;
    std::vector<LatencyPoint> corrected;
};

DispersionResult analyze_scan(const WavelengthScan& scan, std::span<const double> grid, bool compensate = true,
                              double lambda0 = 1550.0);

}  // namespace corrotdr
