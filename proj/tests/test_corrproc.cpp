#include "corrotdr/corrproc.hpp"
#include "corrotdr/dsp.hpp"
#include "corrotdr/error.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace corrotdr;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n)
{
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) {
        x = d(rng);
    }
    return v;
}

// c[k] = sum_j x[j + k] r[j], written independently of the library.
std::vector<double> naive_xcorr(const std::vector<double>& x, const std::vector<double>& r)
{
    std::vector<double> c(x.size(), 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        for (std::size_t j = 0; j < r.size() && j + k < x.size(); ++j) {
            c[k] += x[j + k] * r[j];
        }
    }
    return c;
}

double max_abs(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

SampledWaveform wave(std::vector<double> s, double fs = 40e9) { return SampledWaveform{std::move(s), fs, 0.0}; }

}  // namespace

TEST_CASE("fast correlation equals direct summation on random inputs")
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> len(1, 10000);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = len(rng);
        const std::size_t m = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(n, 3000))(rng);
        const auto x = random_vector(rng, n);
        const auto k = random_vector(rng, m);
        const std::ptrdiff_t off = std::uniform_int_distribution<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(m))(rng);
        const auto fast = dsp::correlate(x, k, off);
        const auto slow = dsp::correlate_direct(x, k, off);
        REQUIRE(fast.size() == slow.size());
        const double scale = max_abs(slow);
        for (std::size_t i = 0; i < fast.size(); ++i) {
            REQUIRE(std::abs(fast[i] - slow[i]) <= 1e-9 * scale);
        }
    }
}

TEST_CASE("library correlation matches an independent naive oracle")
{
    std::mt19937_64 rng(11);
    const auto x = random_vector(rng, 10000);
    const auto r = random_vector(rng, 508);
    const auto c = cross_correlate(wave(x), wave(r), 4);
    const auto ref = naive_xcorr(x, r);
    const double scale = max_abs(ref);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        REQUIRE(std::abs(c.values[i] - ref[i]) <= 1e-9 * scale);
    }
    CHECK(c.size() == x.size());
    CHECK(c.samples_per_bit == 4);
}

TEST_CASE("good fft sizes are 7-smooth and not smaller than requested")
{
    for (std::size_t n : {1u, 2u, 11u, 13u, 127u, 1000u, 8191u, 65537u}) {
        std::size_t g = dsp::good_fft_size(n);
        CHECK(g >= n);
        for (std::size_t p : {2u, 3u, 5u, 7u}) {
            while (g % p == 0) {
                g /= p;
            }
        }
        CHECK(g == 1);
    }
}

TEST_CASE("impulse probe returns the reversed reference")
{
    std::vector<double> x(300, 0.0);
    const std::size_t m = 200;
    x[m] = 1.0;
    std::vector<double> r{1.0, -2.0, 3.5, 0.25, 9.0};
    const auto c = cross_correlate(wave(x), wave(r));
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double expect = (k <= m && m - k < r.size()) ? r[m - k] : 0.0;
        REQUIRE(c.values[k] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("prbs7 bipolar burst correlated with itself peaks at 508")
{
    const auto seq = gen_prbs(7);
    auto pm = correlation_reference(seq, 4, 40e9, ReferenceMapping::Unipolar);
    for (double& v : pm.samples) {
        v = 2.0 * v - 1.0;
    }
    std::vector<double> rx(pm.samples);
    rx.resize(4000, 0.0);
    const auto c = cross_correlate(wave(rx), pm, 4);
    CHECK(c.values[0] == doctest::Approx(508.0).epsilon(1e-12));
    CHECK(std::max_element(c.values.begin(), c.values.end()) == c.values.begin());
    // Triangular apex: one sample off loses two chips' worth of overlap per bit edge.
    CHECK(c.values[1] < c.values[0]);

    // Mean-removed reference: peak drops by mean * sum(rx) = (1/127) * 4.
    const auto zm = correlation_reference(seq, 4, 40e9, ReferenceMapping::ZeroMean);
    const auto cz = cross_correlate(wave(rx), zm, 4);
    CHECK(cz.values[0] == doctest::Approx(508.0 - 4.0 / 127.0).epsilon(1e-12));
    double sum = 0.0;
    for (double v : zm.samples) {
        sum += v;
    }
    CHECK(std::abs(sum) < 1e-10);
}

TEST_CASE("correlation is linear and shift covariant")
{
    std::mt19937_64 rng(3);
    const auto a = random_vector(rng, 5000);
    const auto b = random_vector(rng, 5000);
    const auto r = random_vector(rng, 400);
    std::vector<double> ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab[i] = a[i] + b[i];
    }
    const auto ca = cross_correlate(wave(a), wave(r)).values;
    const auto cb = cross_correlate(wave(b), wave(r)).values;
    const auto cab = cross_correlate(wave(ab), wave(r)).values;
    const double scale = max_abs(cab);
    for (std::size_t i = 0; i < ca.size(); ++i) {
        REQUIRE(std::abs(cab[i] - ca[i] - cb[i]) <= 1e-12 * scale * 10);
    }

    const std::size_t shift = 37;
    std::vector<double> delayed(a.size(), 0.0);
    for (std::size_t i = 0; i + shift < a.size(); ++i) {
        delayed[i + shift] = a[i];
    }
    const auto cd = cross_correlate(wave(delayed), wave(r)).values;
    const double s2 = max_abs(ca);
    // Lags whose window stays inside the record move by exactly `shift`.
    for (std::size_t k = 0; k + shift + r.size() <= a.size(); ++k) {
        REQUIRE(std::abs(cd[k + shift] - ca[k]) <= 1e-9 * s2);
    }
}

TEST_CASE("reference longer than the received waveform is rejected")
{
    CHECK_THROWS_AS(cross_correlate(wave({1.0, 2.0}), wave({1.0, 2.0, 3.0})), Error);
}

TEST_CASE("averaging")
{
    Trace t1{wave({1.0, 2.0, 3.0}), 0.0, 1550.0};
    Trace t2{wave({3.0, 6.0, -1.0}), 1.0, 1550.0};
    std::vector<Trace> same(5, t1);
    CHECK(average_traces(same).samples == t1.waveform.samples);
    std::vector<Trace> pair{t1, t2};
    const auto m = average_traces(pair);
    CHECK(m.samples == std::vector<double>{2.0, 4.0, 1.0});

    CHECK_THROWS_AS(average_traces(std::span<const Trace>{}), Error);
    Trace shorter{wave({1.0, 2.0}), 0.0, 1550.0};
    std::vector<Trace> bad{t1, shorter};
    CHECK_THROWS_AS(average_traces(bad), Error);
    Trace other_rate{wave({1.0, 2.0, 3.0}, 10e9), 0.0, 1550.0};
    std::vector<Trace> bad_rate{t1, other_rate};
    CHECK_THROWS_AS(average_traces(bad_rate), Error);
    Trace other_lambda{wave({1.0, 2.0, 3.0}), 0.0, 1551.0};
    std::vector<Trace> bad_lambda{t1, other_lambda};
    CHECK_THROWS_AS(average_traces(bad_lambda), Error);
}

TEST_CASE("averaging reduces white noise by sqrt(N)")
{
    std::mt19937_64 rng(99);
    const std::size_t n_samples = 20000;
    const double sigma = 0.7;
    for (std::size_t n : {10u, 100u, 1000u}) {
        TraceAverager avg;
        std::normal_distribution<double> d(0.0, sigma);
        std::vector<double> buf(n_samples);
        for (std::size_t t = 0; t < n; ++t) {
            for (double& v : buf) {
                v = d(rng);
            }
            avg.add(buf, 40e9, 1550.0);
        }
        const auto m = avg.mean();
        double ss = 0.0;
        for (double v : m.samples) {
            ss += v * v;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n_samples));
        CHECK(sd == doctest::Approx(sigma / std::sqrt(static_cast<double>(n))).epsilon(0.10));
    }
}

TEST_CASE("aperiodic autocorrelation matches direct sums")
{
    const auto seq = gen_prbs(7);
    for (auto mapping : {ReferenceMapping::Unipolar, ReferenceMapping::ZeroMean}) {
        const auto acf = aperiodic_autocorrelation(seq, mapping);
        REQUIRE(acf.size() == 253);
        std::vector<double> s;
        for (auto b : seq.bits) {
            s.push_back(mapping == ReferenceMapping::Unipolar ? b : 2.0 * b - 1.0);
        }
        for (long lag = -126; lag <= 126; ++lag) {
            double acc = 0.0;
            for (long j = 0; j < 127; ++j) {
                if (j + lag >= 0 && j + lag < 127) {
                    acc += s[j + lag] * s[j];
                }
            }
            REQUIRE(acf[126 + lag] == acc);
        }
        CHECK(acf[126] == (mapping == ReferenceMapping::Unipolar ? 64.0 : 127.0));
    }
}

TEST_CASE("sidelobe filter shape and suppression")
{
    const auto seq = gen_prbs(7);
    for (auto mapping : {ReferenceMapping::ZeroMean, ReferenceMapping::Unipolar}) {
        const auto filt = design_sidelobe_filter(seq, 1e-3, mapping);
        CHECK(filt.taps.size() == 255);
        CHECK(filt.center() == 127);
        CHECK(filt.condition_number > 1.0);
        CHECK(std::isfinite(filt.condition_number));

        const auto acf = aperiodic_autocorrelation(seq, mapping);
        const auto out = apply_filter_bits(acf, filt);
        const std::size_t c = 126 + 127;
        REQUIRE(out.size() == acf.size() + 254);
        CHECK(std::abs(out[c] - acf[126]) <= 0.01 * acf[126]);
        double worst = 0.0;
        for (long lag = -127; lag <= 127; ++lag) {
            if (lag != 0) {
                worst = std::max(worst, std::abs(out[static_cast<std::size_t>(static_cast<long>(c) + lag)]));
            }
        }
        CHECK(20.0 * std::log10(out[c] / worst) >= 20.0);
        CHECK(filt.peak_sidelobe > 0.0);
        CHECK(filt.peak_sidelobe < 0.1);
    }
}

TEST_CASE("ideal impulse response gives a near-identity filter")
{
    std::vector<double> delta(21, 0.0);
    delta[10] = 5.0;
    const auto filt = design_deconvolution_filter(delta, 21, 1e-3);
    const auto out = apply_filter_bits(delta, filt);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] == doctest::Approx(i == 20 ? 5.0 : 0.0).epsilon(1e-9).scale(5.0));
    }
}

TEST_CASE("unregularized design on a singular response reports conditioning instead of failing")
{
    std::vector<double> flat{1.0, 1.0, 1.0};
    SidelobeFilter f;
    CHECK_NOTHROW(f = design_deconvolution_filter(flat, 31, 0.0));
    CHECK(f.condition_number > 10.0);
}

TEST_CASE("apply_filter with an identity filter leaves the correlation unchanged")
{
    std::mt19937_64 rng(5);
    CorrelationResult c{random_vector(rng, 2000), 40e9, 0.0, 4};
    SidelobeFilter id;
    id.taps = {0.0, 0.0, 1.0, 0.0, 0.0};
    id.tap_spacing = 4;
    const auto out = apply_filter(c, id);
    for (std::size_t i = 0; i < c.size(); ++i) {
        REQUIRE(out.values[i] == doctest::Approx(c.values[i]).epsilon(1e-12).scale(1.0));
    }
    id.tap_spacing = 2;
    CHECK_THROWS_AS(apply_filter(c, id), Error);
}

TEST_CASE("apply_filter equals a bit-spaced direct convolution")
{
    std::mt19937_64 rng(6);
    const auto seq = gen_prbs(5);
    const auto filt = design_sidelobe_filter(seq, 1e-3, ReferenceMapping::ZeroMean, 4);
    CorrelationResult c{random_vector(rng, 3000), 40e9, 1e-9, 4};
    const auto out = apply_filter(c, filt);
    const long s = 4;
    const long cc = static_cast<long>(filt.center());
    for (long k = 0; k < static_cast<long>(c.size()); k += 13) {
        double acc = 0.0;
        for (long i = 0; i < static_cast<long>(filt.taps.size()); ++i) {
            const long idx = k - (i - cc) * s;
            if (idx >= 0 && idx < static_cast<long>(c.size())) {
                acc += filt.taps[i] * c.values[idx];
            }
        }
        REQUIRE(out.values[k] == doctest::Approx(acc).epsilon(1e-9).scale(1.0));
    }
    CHECK(out.t0 == c.t0);
}

TEST_CASE("filter cache returns one shared design per key")
{
    auto& cache = SidelobeFilterCache::global();
    const auto seq = gen_prbs(6);
    const auto a = cache.get(seq, 1e-3, ReferenceMapping::ZeroMean, 4);
    const auto b = cache.get(seq, 1e-3, ReferenceMapping::ZeroMean, 4);
    const auto c = cache.get(seq, 1e-2, ReferenceMapping::ZeroMean, 4);
    CHECK(a.get() == b.get());
    CHECK(a.get() != c.get());
}
