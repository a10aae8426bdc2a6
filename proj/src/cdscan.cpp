#include "corrotdr/cdscan.hpp"
#include "corrotdr/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

namespace corrotdr {

DriftModel estimate_drift(const WavelengthScan& scan)
{
    const std::size_t m = scan.entries.size();
    require(m >= 1, "empty wavelength scan");
    std::size_t rows = 0;
    bool has_spread = false;
    for (const auto& e : scan.entries) {
        require(e.subsets.size() >= 2, "drift estimation needs at least two subsets per wavelength");
        rows += e.subsets.size();
        for (const auto& s : e.subsets) {
            if (s.wall_clock != e.subsets.front().wall_clock) {
                has_spread = true;
            }
        }
    }
    if (!has_spread) {
        fail(ErrorCode::DegenerateDrift, "all subsets of each wavelength share one wall clock; drift is unobservable");
    }

    // Work in ps relative to the first subset and hours since scan start.
    const double ref = scan.entries.front().subsets.front().end_rtt;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m + 1));
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows));
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (const auto& s : scan.entries[i].subsets) {
            a(r, 0) = s.wall_clock / 3600.0;
            a(r, static_cast<Eigen::Index>(i + 1)) = 1.0;
            b(r) = (s.end_rtt - ref) * 1e12;
            ++r;
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < a.cols()) {
        fail(ErrorCode::DegenerateDrift, "drift design matrix is rank deficient");
    }
    const Eigen::VectorXd x = qr.solve(b);

    DriftModel d;
    d.rate_ps_per_hour = x(0);
    for (std::size_t i = 0; i < m; ++i) {
        d.offsets.push_back(ref + x(static_cast<Eigen::Index>(i + 1)) * 1e-12);
    }
    d.residual_ps = std::sqrt((a * x - b).squaredNorm() / static_cast<double>(rows));
    return d;
}

std::vector<LatencyPoint> compensate_drift(const WavelengthScan& scan, const DriftModel& drift)
{
    std::vector<LatencyPoint> out;
    for (const auto& e : scan.entries) {
        require(!e.subsets.empty(), "wavelength entry without subsets");
        // Sum deviations from the first subset to keep full precision.
        const double base = e.subsets.front().end_rtt;
        double acc = 0.0;
        for (const auto& s : e.subsets) {
            acc += (s.end_rtt - base) - drift.rate_ps_per_hour * 1e-12 * (s.wall_clock / 3600.0);
        }
        out.push_back({e.wavelength, base + acc / static_cast<double>(e.subsets.size())});
    }
    return out;
}

std::vector<LatencyPoint> average_subsets(const WavelengthScan& scan) { return compensate_drift(scan, DriftModel{}); }

double LatencyPolynomial::rtt_ps(double lambda_nm) const
{
    const double x = lambda_nm - lambda0;
    return b0_ns * 1e3 + b1_ps_per_nm * x + b2_ps_per_nm2 * x * x;
}

LatencyPolynomial fit_latency_polynomial(std::span<const LatencyPoint> points, double lambda0)
{
    std::set<double> distinct;
    for (const auto& p : points) {
        distinct.insert(p.wavelength);
    }
    require(distinct.size() >= 3, "quadratic fit needs at least three distinct wavelengths");

    const auto n = static_cast<Eigen::Index>(points.size());
    double mean_ps = 0.0;
    for (const auto& p : points) {
        mean_ps += p.rtt * 1e12;
    }
    mean_ps /= static_cast<double>(points.size());

    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = points[static_cast<std::size_t>(i)];
        const double x = p.wavelength - lambda0;
        a(i, 0) = 1.0;
        a(i, 1) = x;
        a(i, 2) = x * x;
        b(i) = p.rtt * 1e12 - mean_ps;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < 3) {
        fail(ErrorCode::RankDeficient, "wavelength design matrix is rank deficient");
    }
    const Eigen::VectorXd c = qr.solve(b);

    LatencyPolynomial poly;
    poly.lambda0 = lambda0;
    poly.b0_ns = (c(0) + mean_ps) * 1e-3;
    poly.b1_ps_per_nm = c(1);
    poly.b2_ps_per_nm2 = c(2);
    poly.fit_rms_ps = std::sqrt((a * c - b).squaredNorm() / static_cast<double>(n));
    return poly;
}

std::vector<DispersionPoint> compute_dispersion(const LatencyPolynomial& poly, double fiber_length_km,
                                                std::span<const double> wavelengths)
{
    require(fiber_length_km > 0, "fiber length must be positive");
    std::vector<DispersionPoint> out;
    out.reserve(wavelengths.size());
    for (double l : wavelengths) {
        out.push_back({l, poly.slope_ps_per_nm(l) / (2.0 * fiber_length_km)});
    }
    return out;
}

std::vector<double> wavelength_grid(double lo, double hi, std::size_t n)
{
    require(n >= 2 && hi > lo, "grid needs hi > lo and at least two points");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return g;
}

double compare_with_reference(std::span<const DispersionPoint> measured, const DispersionParams& reference)
{
    require(!measured.empty(), "empty dispersion curve");
    double worst = 0.0;
    for (const auto& p : measured) {
        worst = std::max(worst, std::abs(p.d - reference.at(p.wavelength)));
    }
    return worst;
}

double compare_with_reference(std::span<const DispersionPoint> measured, std::span<const DispersionPoint> reference)
{
    require(reference.size() >= 2, "reference curve needs at least two points");
    std::vector<DispersionPoint> ref(reference.begin(), reference.end());
    std::sort(ref.begin(), ref.end(), [](const auto& a, const auto& b) { return a.wavelength < b.wavelength; });
    double worst = 0.0;
    bool any = false;
    for (const auto& p : measured) {
        if (p.wavelength < ref.front().wavelength || p.wavelength > ref.back().wavelength) {
            continue;
        }
        auto hi = std::lower_bound(ref.begin(), ref.end(), p.wavelength,
                                   [](const DispersionPoint& r, double l) { return r.wavelength < l; });
        double d;
        if (hi->wavelength == p.wavelength || hi == ref.begin()) {
            d = hi->d;
        } else {
            auto lo = std::prev(hi);
            const double f = (p.wavelength - lo->wavelength) / (hi->wavelength - lo->wavelength);
            d = lo->d + f * (hi->d - lo->d);
        }
        worst = std::max(worst, std::abs(p.d - d));
        any = true;
    }
    require(any, "measured and reference wavelength ranges do not overlap");
    return worst;
}

DispersionResult analyze_scan(const WavelengthScan& scan, std::span<const double> grid, bool compensate,
                              double lambda0)
{
    DispersionResult res;
    res.drift_compensated = compensate;
    if (compensate) {
        res.drift = estimate_drift(scan);
        res.corrected = compensate_drift(scan, res.drift);
    } else {
        res.corrected = average_subsets(scan);
    }
    res.poly = fit_latency_polynomial(res.corrected, lambda0);
    res.d_curve = compute_dispersion(res.poly, scan.fiber_length_km, grid);
    return res;
}

}  // namespace corrotdr
