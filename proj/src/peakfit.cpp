#include "corrotdr/peakfit.hpp"
#include "corrotdr/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace corrotdr {

namespace {

double median_of(std::vector<double> v)
{
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) {
        return *mid;
    }
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace

std::vector<PeakIndex> detect_peaks(const CorrelationResult& corr, double threshold_rel, double min_separation,
                                    std::size_t max_peaks, double min_snr)
{
    require(threshold_rel > 0 && threshold_rel < 1, "threshold_rel must be in (0, 1)");
    const auto& v = corr.values;
    if (v.size() < 3 || max_peaks == 0) {
        return {};
    }
    const double gmax = *std::max_element(v.begin(), v.end());
    if (!(gmax > 0)) {
        return {};
    }
    double threshold = threshold_rel * gmax;
    if (min_snr > 0) {
        // MAD about the median; the peaks themselves are a negligible fraction.
        const double med = median_of(v);
        std::vector<double> dev(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            dev[i] = std::abs(v[i] - med);
        }
        const double sigma = 1.4826 * median_of(std::move(dev));
        threshold = std::max(threshold, med + min_snr * sigma);
    }

    std::vector<PeakIndex> cand;
    for (std::size_t k = 1; k + 1 < v.size(); ++k) {
        if (v[k] >= threshold && v[k] > v[k - 1] && v[k] >= v[k + 1]) {
            cand.push_back({k, v[k]});
        }
    }
    std::stable_sort(cand.begin(), cand.end(), [](const PeakIndex& a, const PeakIndex& b) { return a.value > b.value; });

    const double sep = min_separation * corr.sample_rate;
    std::vector<PeakIndex> picked;
    for (const auto& c : cand) {
        const bool clear = std::none_of(picked.begin(), picked.end(), [&](const PeakIndex& p) {
            return std::abs(static_cast<double>(p.index) - static_cast<double>(c.index)) < sep;
        });
        if (clear) {
            picked.push_back(c);
            if (picked.size() == max_peaks) {
                break;
            }
        }
    }
    std::sort(picked.begin(), picked.end(), [](const PeakIndex& a, const PeakIndex& b) { return a.index < b.index; });
    return picked;
}

double gaussian_model(const GaussParams& p, double x)
{
    const double u = (x - p[0]) / p[1];
    return p[3] + p[2] * std::exp(-0.5 * u * u);
}

std::array<double, 4> gaussian_jacobian(const GaussParams& p, double x)
{
    const double d = x - p[0];
    const double w = p[1];
    const double e = std::exp(-0.5 * d * d / (w * w));
    return {p[2] * e * d / (w * w), p[2] * e * d * d / (w * w * w), e, 1.0};
}

GaussFitResult fit_gaussian_samples(std::span<const double> x, std::span<const double> y, int max_iterations,
                                    double step_tolerance)
{
    require(x.size() == y.size() && x.size() >= 5, "Gaussian fit needs at least five samples");
    const std::size_t n = x.size();
    const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
    if (!(*ymax_it > *ymin_it)) {
        fail(ErrorCode::FitDegenerate, "constant fit window");
    }

    // Start: apex position, median baseline, half-maximum width.
    const std::size_t apex = static_cast<std::size_t>(ymax_it - y.begin());
    const double base = median_of(std::vector<double>(y.begin(), y.end()));
    double amp = *ymax_it - base;
    if (!(amp > 0)) {
        amp = *ymax_it - *ymin_it;
    }
    const double half = base + 0.5 * amp;
    auto crossing = [&](int dir) {
        std::ptrdiff_t i = static_cast<std::ptrdiff_t>(apex);
        while (i + dir >= 0 && i + dir < static_cast<std::ptrdiff_t>(n) && y[static_cast<std::size_t>(i + dir)] > half) {
            i += dir;
        }
        const std::ptrdiff_t j = i + dir;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) {
            return x[static_cast<std::size_t>(i)];
        }
        const double yi = y[static_cast<std::size_t>(i)];
        const double yj = y[static_cast<std::size_t>(j)];
        const double f = (yi - half) / (yi - yj);
        return x[static_cast<std::size_t>(i)] + f * (x[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(i)]);
    };
    const double fwhm = crossing(+1) - crossing(-1);
    const double spacing = std::abs(x[1] - x[0]);
    GaussParams p{x[apex], std::max(fwhm / 2.354820045, 0.5 * spacing), amp, base};

    auto cost = [&](const GaussParams& q) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - gaussian_model(q, x[i]);
            s += r * r;
        }
        return s;
    };

    GaussFitResult res;
    double lambda = 1e-3;
    double chi2 = cost(p);
    // Step scale for the convergence test: parameters near zero use the
    // sample spacing (center, width) or the amplitude (offset).
    for (int it = 1; it <= max_iterations; ++it) {
        res.iterations = it;
        Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
        Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = gaussian_jacobian(p, x[i]);
            const Eigen::Vector4d jv(g[0], g[1], g[2], g[3]);
            const double r = y[i] - gaussian_model(p, x[i]);
            jtj.noalias() += jv * jv.transpose();
            jtr += jv * r;
        }

        bool accepted = false;
        Eigen::Vector4d step;
        GaussParams trial{};
        for (int inner = 0; inner < 30; ++inner) {
            Eigen::Matrix4d m = jtj;
            for (int d = 0; d < 4; ++d) {
                m(d, d) += lambda * std::max(jtj(d, d), 1e-300);
            }
            step = m.ldlt().solve(jtr);
            for (int d = 0; d < 4; ++d) {
                trial[static_cast<std::size_t>(d)] = p[static_cast<std::size_t>(d)] + step(d);
            }
            trial[1] = std::abs(trial[1]);
            const double c2 = cost(trial);
            if (std::isfinite(c2) && c2 <= chi2) {
                accepted = true;
                chi2 = c2;
                lambda = std::max(lambda * 0.3, 1e-12);
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No downhill step even with heavy damping: at a minimum to round-off.
            res.converged = true;
            break;
        }
        const std::array<double, 4> scale{spacing, spacing, std::abs(trial[2]), std::abs(trial[2])};
        bool small = true;
        for (int d = 0; d < 4; ++d) {
            const auto ud = static_cast<std::size_t>(d);
            if (std::abs(step(d)) > step_tolerance * std::max(std::abs(trial[ud]), scale[ud])) {
                small = false;
            }
        }
        p = trial;
        if (small) {
            res.converged = true;
            break;
        }
    }
    res.params = p;
    res.residual_rms = std::sqrt(cost(p) / static_cast<double>(n));
    if (!(p[1] > 0) || !(p[2] > 0) || !(res.residual_rms < p[2])) {
        res.converged = false;
    }
    return res;
}

PeakEstimate fit_gaussian(const CorrelationResult& corr, std::size_t peak_index, std::size_t window_halfwidth)
{
    require(window_halfwidth >= 2, "fit window half-width must be at least 2 samples");
    require(peak_index >= window_halfwidth && peak_index + window_halfwidth < corr.size(),
            "fit window extends outside the correlation");
    const std::size_t n = 2 * window_halfwidth + 1;
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = static_cast<double>(i) - static_cast<double>(window_halfwidth);
        y[i] = corr.values[peak_index - window_halfwidth + i];
    }
    const auto fit = fit_gaussian_samples(x, y);

    PeakEstimate est;
    est.center = corr.lag_time(static_cast<double>(peak_index) + fit.params[0]);
    est.width = fit.params[1] / corr.sample_rate;
    est.amplitude = fit.params[2];
    est.offset = fit.params[3];
    est.residual_rms = fit.residual_rms;
    est.converged = fit.converged;
    est.iterations = fit.iterations;
    return est;
}

LatencyReport latency_report(std::span<const PeakEstimate> peaks)
{
    if (peaks.size() < 2) {
        fail(ErrorCode::InsufficientPeaks, "need at least two reflection peaks, found " + std::to_string(peaks.size()));
    }
    require(peaks.size() <= 3, "at most three peaks (input, end, triple) are assigned");
    for (std::size_t i = 1; i < peaks.size(); ++i) {
        require(peaks[i].center > peaks[i - 1].center, "peak centers must be ascending");
    }
    LatencyReport rep;
    rep.input_rtt = peaks[0].center;
    rep.end_rtt = peaks[1].center;
    rep.fiber_rtt = rep.end_rtt - rep.input_rtt;
    if (peaks.size() == 3) {
        rep.triple_rtt = peaks[2].center;
        rep.consistency_error = peaks[2].center - (2.0 * rep.end_rtt - rep.input_rtt);
    }
    return rep;
}

}  // namespace corrotdr
