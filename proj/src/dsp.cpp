#include "corrotdr/dsp.hpp"
#include "corrotdr/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace corrotdr::dsp {

namespace {

std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n)
{
    require(n >= 2, "FFT size must be at least 2");
    real_ = fftw_alloc_real(n_);
    spec_ = fftw_alloc_complex(spectrum_size());
    std::lock_guard lock(planner_mutex());
    auto* c = static_cast<fftw_complex*>(spec_);
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_, c, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), c, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft()
{
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
        fftw_destroy_plan(static_cast<fftw_plan>(inv_));
    }
    fftw_free(real_);
    fftw_free(spec_);
}

void RealFft::forward() { fftw_execute(static_cast<fftw_plan>(fwd_)); }

// c2r destroys its input; callers always refill the spectrum before reuse.
void RealFft::inverse() { fftw_execute(static_cast<fftw_plan>(inv_)); }

std::size_t good_fft_size(std::size_t n)
{
    for (std::size_t m = std::max<std::size_t>(n, 2);; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2u, 3u, 5u, 7u}) {
            while (r % p == 0) {
                r /= p;
            }
        }
        if (r == 1) {
            return m;
        }
    }
}

std::vector<double> correlate_direct(std::span<const double> x, std::span<const double> kernel, std::ptrdiff_t offset)
{
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const auto m = static_cast<std::ptrdiff_t>(kernel.size());
    std::vector<double> out(x.size(), 0.0);
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const std::ptrdiff_t base = k - offset;
        const std::ptrdiff_t jlo = std::max<std::ptrdiff_t>(0, -base);
        const std::ptrdiff_t jhi = std::min<std::ptrdiff_t>(m, n - base);
        double acc = 0.0;
        for (std::ptrdiff_t j = jlo; j < jhi; ++j) {
            acc += x[base + j] * kernel[j];
        }
        out[k] = acc;
    }
    return out;
}

std::vector<double> correlate(std::span<const double> x, std::span<const double> kernel, std::ptrdiff_t offset)
{
    const std::size_t m = kernel.size();
    if (x.empty() || m == 0) {
        return std::vector<double>(x.size(), 0.0);
    }
    if (m <= 32 || x.size() <= 256) {
        return correlate_direct(x, kernel, offset);
    }

    const std::size_t fft_n = good_fft_size(std::max<std::size_t>(8192, 4 * m));
    const std::size_t block = fft_n - m + 1;
    const auto n = static_cast<std::ptrdiff_t>(x.size());

    RealFft kfft(fft_n);
    std::fill_n(kfft.real(), fft_n, 0.0);
    std::copy(kernel.begin(), kernel.end(), kfft.real());
    kfft.forward();
    std::vector<std::complex<double>> kspec(kfft.spectrum(), kfft.spectrum() + kfft.spectrum_size());

    RealFft fft(fft_n);
    std::vector<double> out(x.size());
    const double scale = 1.0 / static_cast<double>(fft_n);
    for (std::ptrdiff_t k0 = 0; k0 < n; k0 += static_cast<std::ptrdiff_t>(block)) {
        double* buf = fft.real();
        const std::ptrdiff_t start = k0 - offset;
        for (std::size_t i = 0; i < fft_n; ++i) {
            const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
            buf[i] = (idx >= 0 && idx < n) ? x[idx] : 0.0;
        }
        fft.forward();
        auto* s = fft.spectrum();
        for (std::size_t i = 0; i < fft.spectrum_size(); ++i) {
            s[i] *= std::conj(kspec[i]);
        }
        fft.inverse();
        const std::ptrdiff_t count = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(block), n - k0);
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            out[k0 + i] = buf[i] * scale;
        }
    }
    return out;
}

}  // namespace corrotdr::dsp
