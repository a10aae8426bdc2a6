#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace corrotdr::dsp {

/// Real-to-complex FFT of fixed size backed by FFTW. Plans are created under
/// a global lock; execute() is safe to call concurrently on distinct
/// instances.
class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const { return n_; }
    std::size_t spectrum_size() const { return n_ / 2 + 1; }

    double* real() { return real_; }
    std::complex<double>* spectrum() { return reinterpret_cast<std::complex<double>*>(spec_); }

    void forward();  // real() -> spectrum()
    void inverse();  // spectrum() -> real(), unnormalized

private:
    std::size_t n_;
    double* real_;
    void* spec_;
    void* fwd_;
    void* inv_;
};

/// Smallest n' >= n whose only prime factors are 2, 3, 5 and 7.
std::size_t good_fft_size(std::size_t n);

/// out[k] = sum_j x[k + j - offset] * kernel[j] for k in [0, x.size()),
/// with x taken as zero outside its bounds. Overlap-save.
std::vector<double> correlate(std::span<const double> x, std::span<const double> kernel, std::ptrdiff_t offset = 0);

/// Same quantity by direct summation; reference for tests and tiny inputs.
std::vector<double> correlate_direct(std::span<const double> x, std::span<const double> kernel,
                                     std::ptrdiff_t offset = 0);

}  // namespace corrotdr::dsp
