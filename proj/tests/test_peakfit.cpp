#include "corrotdr/error.hpp"
#include "corrotdr/peakfit.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace corrotdr;

namespace {

constexpr double kFs = 40e9;

std::vector<double> gaussian_samples(const GaussParams& p, std::size_t n)
{
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = gaussian_model(p, static_cast<double>(i));
    }
    return y;
}

// Best amplitude/offset for a fixed center and width (linear least squares),
// returning the residual sum of squares.
double profile_cost(const std::vector<double>& x, const std::vector<double>& y, double c, double w)
{
    double sg = 0.0, sgg = 0.0, sy = 0.0, sgy = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = (x[i] - c) / w;
        const double g = std::exp(-0.5 * u * u);
        sg += g;
        sgg += g * g;
        sy += y[i];
        sgy += g * y[i];
    }
    const double det = n * sgg - sg * sg;
    const double a = (n * sgy - sg * sy) / det;
    const double b = (sy - a * sg) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = (x[i] - c) / w;
        const double r = y[i] - (b + a * std::exp(-0.5 * u * u));
        ss += r * r;
    }
    return ss;
}

// Golden-section search over the width for a fixed center.
double best_over_width(const std::vector<double>& x, const std::vector<double>& y, double c)
{
    double lo = 0.2, hi = 10.0;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    double fa = profile_cost(x, y, c, a), fb = profile_cost(x, y, c, b);
    for (int it = 0; it < 80; ++it) {
        if (fa < fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = profile_cost(x, y, c, a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = profile_cost(x, y, c, b);
        }
    }
    return std::min(fa, fb);
}

// Dense center grid (0.01 ps) after a coarse scan; center in samples.
double grid_search_center(const std::vector<double>& x, const std::vector<double>& y, double start)
{
    const double fine = 0.01e-12 * kFs;
    double best = start, best_cost = INFINITY;
    for (double c = start - 1.0; c <= start + 1.0; c += 0.01) {
        const double cost = best_over_width(x, y, c);
        if (cost < best_cost) {
            best_cost = cost;
            best = c;
        }
    }
    const double coarse = best;
    for (double c = coarse - 0.01; c <= coarse + 0.01; c += fine) {
        const double cost = best_over_width(x, y, c);
        if (cost < best_cost) {
            best_cost = cost;
            best = c;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("exact gaussian samples are recovered to 1e-8")
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const GaussParams truth{12.0 + (u(rng) - 0.5) * 2.0, 1.2 + 1.5 * u(rng), 0.5 + 100.0 * u(rng),
                                (u(rng) - 0.5) * 10.0};
        const auto y = gaussian_samples(truth, 25);
        std::vector<double> x(25);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = static_cast<double>(i);
        }
        const auto fit = fit_gaussian_samples(x, y);
        REQUIRE(fit.converged);
        for (std::size_t k = 0; k < 4; ++k) {
            const double scale = k == 0 ? 1.0 : std::abs(truth[k]);
            REQUIRE(std::abs(fit.params[k] - truth[k]) <= 1e-8 * std::max(scale, 1.0));
        }
        CHECK(fit.residual_rms < 1e-8 * truth[2]);
    }
}

TEST_CASE("analytic jacobian matches central finite differences")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const GaussParams p{u(rng) * 20.0, 0.5 + 3.0 * u(rng), 0.1 + 10.0 * u(rng), u(rng) - 0.5};
        const double x = p[0] + (u(rng) - 0.5) * 4.0 * p[1];
        const auto jac = gaussian_jacobian(p, x);
        for (std::size_t k = 0; k < 4; ++k) {
            const double h = 1e-7 * std::max(std::abs(p[k]), 1.0);
            auto hi = p, lo = p;
            hi[k] += h;
            lo[k] -= h;
            const double fd = (gaussian_model(hi, x) - gaussian_model(lo, x)) / (2.0 * h);
            const double scale = std::max({std::abs(jac[k]), std::abs(fd), 1e-3});
            REQUIRE(std::abs(jac[k] - fd) <= 1e-5 * scale);
        }
    }
}

TEST_CASE("nonlinear fit agrees with a dense grid-search oracle on noisy peaks")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (int trial = 0; trial < 8; ++trial) {
        const GaussParams truth{12.0 + (u(rng) - 0.5), 1.8 + 0.4 * u(rng), 1.0, 0.05 * (u(rng) - 0.5)};
        auto y = gaussian_samples(truth, 25);
        for (double& v : y) {
            v += noise(rng);
        }
        CorrelationResult corr;
        corr.values = y;
        corr.sample_rate = kFs;
        const auto est = fit_gaussian(corr, 12, 12);
        REQUIRE(est.converged);
        std::vector<double> x(25);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = static_cast<double>(i);
        }
        const double oracle = grid_search_center(x, y, 12.0);
        CHECK(std::abs(est.center * kFs - oracle) / kFs * 1e12 < 0.1);
    }
}

TEST_CASE("residual is orthogonal to the jacobian at convergence")
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 0.01);
    const GaussParams truth{10.3, 2.0, 1.0, 0.1};
    auto y = gaussian_samples(truth, 21);
    for (double& v : y) {
        v += noise(rng);
    }
    std::vector<double> x(21);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(i);
    }
    const auto fit = fit_gaussian_samples(x, y);
    REQUIRE(fit.converged);
    std::array<double, 4> jtr{};
    double rn = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - gaussian_model(fit.params, x[i]);
        rn += r * r;
        const auto j = gaussian_jacobian(fit.params, x[i]);
        for (std::size_t k = 0; k < 4; ++k) {
            jtr[k] += j[k] * r;
        }
    }
    rn = std::sqrt(rn);
    for (double v : jtr) {
        CHECK(std::abs(v) < 1e-6 * rn);
    }
}

TEST_CASE("fit window placement and degenerate windows")
{
    CorrelationResult corr;
    corr.values.assign(50, 3.0);
    corr.sample_rate = kFs;
    CHECK_THROWS_AS(fit_gaussian(corr, 25, 5), Error);
    try {
        fit_gaussian(corr, 25, 5);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FitDegenerate);
    }
    CHECK_THROWS_AS(fit_gaussian(corr, 2, 5), Error);
    CHECK_THROWS_AS(fit_gaussian(corr, 47, 5), Error);
}

TEST_CASE("fit center is reported on the lag time axis")
{
    CorrelationResult corr;
    corr.sample_rate = kFs;
    corr.t0 = 1e-6;
    corr.values = gaussian_samples({30.37, 1.9, 4.0, 0.0}, 60);
    const auto est = fit_gaussian(corr, 30, 12);
    CHECK(est.converged);
    CHECK(est.center == doctest::Approx(1e-6 + 30.37 / kFs).epsilon(1e-13));
    CHECK(est.width == doctest::Approx(1.9 / kFs).epsilon(1e-8));
    CHECK(est.amplitude == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("converged fits satisfy the estimate invariants on arbitrary data")
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(15), y(15);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = static_cast<double>(i);
            y[i] = n(rng);
        }
        const auto fit = fit_gaussian_samples(x, y);
        if (fit.converged) {
            CHECK(fit.params[1] > 0.0);
            CHECK(fit.params[2] > 0.0);
            CHECK(fit.residual_rms < fit.params[2]);
        }
    }
}

TEST_CASE("peak detection")
{
    CorrelationResult flat;
    flat.values.assign(100, 0.0);
    flat.sample_rate = kFs;
    CHECK(detect_peaks(flat, 0.2, 10e-9, 3).empty());

    CorrelationResult c;
    c.sample_rate = kFs;
    c.values.assign(4000, 0.0);
    c.values[1000] = 10.0;
    c.values[1100] = 4.0;  // 2.5 ns away: inside the exclusion zone
    c.values[3000] = 3.0;
    c.values[3500] = 1.0;  // below 0.2 of the maximum
    const auto p = detect_peaks(c, 0.2, 10e-9, 5);
    REQUIRE(p.size() == 2);
    CHECK(p[0].index == 1000);
    CHECK(p[1].index == 3000);

    const auto one = detect_peaks(c, 0.05, 10e-9, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].index == 1000);

    CHECK(detect_peaks(c, 0.05, 10e-9, 5).size() == 3);
    CHECK_THROWS_AS(detect_peaks(c, 0.0, 10e-9, 3), Error);
    CHECK_THROWS_AS(detect_peaks(c, 1.0, 10e-9, 3), Error);
}

TEST_CASE("noise gate rejects peaks within the noise floor")
{
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 1.0);
    CorrelationResult c;
    c.sample_rate = kFs;
    c.values.resize(20000);
    for (double& v : c.values) {
        v = n(rng);
    }
    c.values[5000] = 100.0;
    c.values[15000] = 20.0;
    const auto gated = detect_peaks(c, 0.01, 10e-9, 10, 8.0);
    REQUIRE(gated.size() == 2);
    CHECK(gated[0].index == 5000);
    CHECK(gated[1].index == 15000);
    CHECK(detect_peaks(c, 0.01, 10e-9, 10, 0.0).size() == 10);
}

TEST_CASE("latency report from measured peak positions")
{
    std::vector<PeakEstimate> peaks(3);
    peaks[0].center = 94.2372e-9;
    peaks[1].center = 21733.1958e-9;
    peaks[2].center = 43372.1563e-9;
    const auto r = latency_report(peaks);
    REQUIRE(r.triple_rtt);
    REQUIRE(r.consistency_error);
    CHECK((2.0 * r.end_rtt - r.input_rtt) * 1e9 == doctest::Approx(43372.1544).epsilon(1e-12));
    CHECK(*r.consistency_error * 1e12 == doctest::Approx(1.9).epsilon(1e-4));
    CHECK(r.fiber_rtt * 1e9 == doctest::Approx(21638.9586).epsilon(1e-12));

    peaks.pop_back();
    const auto two = latency_report(peaks);
    CHECK_FALSE(two.triple_rtt);
    CHECK_FALSE(two.consistency_error);
    CHECK(two.fiber_rtt * 1e9 == doctest::Approx(21638.9586).epsilon(1e-12));

    peaks.pop_back();
    try {
        latency_report(peaks);
        FAIL("expected insufficient peaks");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientPeaks);
    }
}
