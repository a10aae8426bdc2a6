#include "corrotdr/corrproc.hpp"
#include "corrotdr/dsp.hpp"
#include "corrotdr/error.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace corrotdr {

void TraceAverager::add(std::span<const double> samples, double sample_rate, double wavelength)
{
    if (count_ == 0) {
        sum_.assign(samples.size(), 0.0);
        sample_rate_ = sample_rate;
        wavelength_ = wavelength;
    }
    require(samples.size() == sum_.size(), "traces differ in length");
    require(sample_rate == sample_rate_, "traces differ in sample rate");
    require(wavelength == wavelength_, "traces differ in wavelength");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        sum_[i] += samples[i];
    }
    ++count_;
}

void TraceAverager::add(const SampledWaveform& w, double wavelength) { add(w.samples, w.sample_rate, wavelength); }

SampledWaveform TraceAverager::mean() const
{
    require(count_ > 0, "no traces to average");
    SampledWaveform out;
    out.sample_rate = sample_rate_;
    out.samples.resize(sum_.size());
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t i = 0; i < sum_.size(); ++i) {
        out.samples[i] = sum_[i] * inv;
    }
    return out;
}

void TraceAverager::reset()
{
    sum_.clear();
    count_ = 0;
}

SampledWaveform average_traces(std::span<const Trace> traces)
{
    require(!traces.empty(), "cannot average an empty trace list");
    TraceAverager avg;
    for (const auto& t : traces) {
        avg.add(t.waveform, t.wavelength);
    }
    auto out = avg.mean();
    out.t0 = traces.front().waveform.t0;
    return out;
}

SampledWaveform correlation_reference(const BitSequence& seq, int samples_per_bit, double sample_rate,
                                      ReferenceMapping mapping)
{
    require(samples_per_bit >= 1, "samples per bit must be positive");
    require(!seq.bits.empty(), "empty sequence");
    SampledWaveform ref;
    ref.sample_rate = sample_rate;
    ref.samples.reserve(seq.size() * static_cast<std::size_t>(samples_per_bit));
    for (auto b : seq.bits) {
        const double v = mapping == ReferenceMapping::Unipolar ? double(b) : (b ? 1.0 : -1.0);
        ref.samples.insert(ref.samples.end(), static_cast<std::size_t>(samples_per_bit), v);
    }
    if (mapping == ReferenceMapping::ZeroMean) {
        const double mean = std::accumulate(ref.samples.begin(), ref.samples.end(), 0.0) /
                            static_cast<double>(ref.samples.size());
        for (double& v : ref.samples) {
            v -= mean;
        }
    }
    return ref;
}

CorrelationResult cross_correlate(const SampledWaveform& received, const SampledWaveform& reference,
                                  int samples_per_bit)
{
    require(reference.size() <= received.size(), "reference longer than received waveform");
    CorrelationResult out;
    out.values = dsp::correlate(received.samples, reference.samples);
    out.sample_rate = received.sample_rate;
    out.t0 = received.t0;
    out.samples_per_bit = samples_per_bit;
    return out;
}

std::vector<double> aperiodic_autocorrelation(const BitSequence& seq, ReferenceMapping mapping)
{
    const std::size_t n = seq.size();
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = mapping == ReferenceMapping::Unipolar ? double(seq.bits[i]) : (seq.bits[i] ? 1.0 : -1.0);
    }
    std::vector<double> acf(2 * n - 1, 0.0);
    for (std::size_t lag = 0; lag < n; ++lag) {
        double acc = 0.0;
        for (std::size_t j = 0; j + lag < n; ++j) {
            acc += s[j + lag] * s[j];
        }
        acf[n - 1 + lag] = acc;
        acf[n - 1 - lag] = acc;
    }
    return acf;
}

SidelobeFilter design_deconvolution_filter(std::span<const double> acf, std::size_t ntaps, double regularization)
{
    require(acf.size() % 2 == 1 && ntaps % 2 == 1, "response and tap count must have odd length");
    require(regularization >= 0, "regularization must be non-negative");
    const std::size_t L = acf.size();
    const std::size_t rows = L + ntaps - 1;
    const std::size_t c = (L - 1) / 2 + (ntaps - 1) / 2;
    const double peak = acf[(L - 1) / 2];
    require(peak != 0.0, "response has zero center");

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(ntaps));
    for (std::size_t i = 0; i < ntaps; ++i) {
        for (std::size_t k = 0; k < L; ++k) {
            A(static_cast<Eigen::Index>(i + k), static_cast<Eigen::Index>(i)) = acf[k];
        }
    }
    Eigen::VectorXd target = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
    target(static_cast<Eigen::Index>(c)) = peak;

    Eigen::MatrixXd normal = A.transpose() * A;
    normal.diagonal().array() += regularization * peak * peak;
    const Eigen::VectorXd rhs = A.transpose() * target;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double emax = ev.maxCoeff();
    const double emin = ev.minCoeff();
    SidelobeFilter filt;
    filt.regularization = regularization;
    filt.condition_number = emin > 0 ? emax / emin : std::numeric_limits<double>::infinity();
    if (!(filt.condition_number < 1e14)) {
        spdlog::warn("sidelobe filter normal matrix is ill-conditioned (cond {:.3g}); using pseudo-inverse",
                     filt.condition_number);
    }
    // Pseudo-inverse through the eigenbasis; drops directions below round-off.
    Eigen::VectorXd proj = eig.eigenvectors().transpose() * rhs;
    const double cutoff = emax * 1e-14;
    for (Eigen::Index i = 0; i < proj.size(); ++i) {
        proj(i) = ev(i) > cutoff ? proj(i) / ev(i) : 0.0;
    }
    Eigen::VectorXd g = eig.eigenvectors() * proj;

    const double center_out = (A.row(static_cast<Eigen::Index>(c)) * g)(0);
    require(center_out != 0.0, "degenerate sidelobe filter");
    g *= peak / center_out;

    const Eigen::VectorXd out = A * g;
    double side = 0.0;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (i != static_cast<Eigen::Index>(c)) {
            side = std::max(side, std::abs(out(i)));
        }
    }
    filt.peak_sidelobe = side / std::abs(peak);
    filt.response_half_span = c;

    filt.taps.assign(g.data(), g.data() + g.size());
    return filt;
}

SidelobeFilter design_sidelobe_filter(const BitSequence& seq, double regularization, ReferenceMapping mapping,
                                      int samples_per_bit)
{
    require(!seq.bits.empty(), "empty sequence");
    const auto acf = aperiodic_autocorrelation(seq, mapping);
    auto filt = design_deconvolution_filter(acf, 2 * seq.size() + 1, regularization);
    filt.tap_spacing = samples_per_bit;
    return filt;
}

std::vector<double> apply_filter_bits(std::span<const double> x, const SidelobeFilter& filt)
{
    std::vector<double> out(x.size() + filt.taps.size() - 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < filt.taps.size(); ++j) {
            out[i + j] += x[i] * filt.taps[j];
        }
    }
    return out;
}

CorrelationResult apply_filter(const CorrelationResult& corr, const SidelobeFilter& filt)
{
    require(filt.tap_spacing == corr.samples_per_bit,
            "sidelobe filter tap spacing does not match the correlation's samples per bit");
    require(!filt.taps.empty() && filt.taps.size() % 2 == 1, "filter needs an odd, non-empty tap set");
    // out[k] = sum_i g[i] in[k - (i - c) s]; as a correlation the kernel is
    // the reversed, zero-stuffed taps with offset c * s.
    const std::size_t s = static_cast<std::size_t>(filt.tap_spacing);
    const std::size_t T = filt.taps.size();
    std::vector<double> kernel((T - 1) * s + 1, 0.0);
    for (std::size_t j = 0; j < T; ++j) {
        kernel[j * s] = filt.taps[T - 1 - j];
    }
    CorrelationResult out = corr;
    out.values = dsp::correlate(corr.values, kernel, static_cast<std::ptrdiff_t>(filt.center() * s));
    return out;
}

std::shared_ptr<const SidelobeFilter> SidelobeFilterCache::get(const BitSequence& seq, double regularization,
                                                               ReferenceMapping mapping, int samples_per_bit)
{
    std::vector<std::uint8_t> key(seq.bits);
    const auto push = [&key](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        key.insert(key.end(), b, b + n);
    };
    push(&regularization, sizeof regularization);
    push(&mapping, sizeof mapping);
    push(&samples_per_bit, sizeof samples_per_bit);

    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
        return it->second;
    }
    auto filt = std::make_shared<const SidelobeFilter>(design_sidelobe_filter(seq, regularization, mapping, samples_per_bit));
    cache_.emplace(std::move(key), filt);
    return filt;
}

SidelobeFilterCache& SidelobeFilterCache::global()
{
    static SidelobeFilterCache cache;
    return cache;
}

}  // namespace corrotdr
