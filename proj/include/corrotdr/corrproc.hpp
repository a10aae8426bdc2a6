#pragma once

#include "corrotdr/fibersim.hpp"
#include "corrotdr/seqgen.hpp"
#include "corrotdr/waveform.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace corrotdr {

/// Lag-domain correlation output; lag k corresponds to delay t0 + k / sample_rate.
struct CorrelationResult {
    std::vector<double> values;
    double sample_rate = 0.0;
    double t0 = 0.0;
    int samples_per_bit = 1;

    std::size_t size() const { return values.size(); }
    double lag_time(double k) const { return t0 + k / sample_rate; }
};

/// Level mapping used to turn the transmitted bits into a correlation reference.
enum class ReferenceMapping {
    /// 0/1 levels: the matched filter for an intensity receiver. Pairs with a
    /// sidelobe filter designed on the same mapping.
    Unipolar,
    /// -1/+1 levels with the mean removed.
    ZeroMean,
};

/// Pointwise mean; all traces must share length, rate and wavelength.
SampledWaveform average_traces(std::span<const Trace> traces);

/// Running mean over traces pushed one at a time.
class TraceAverager {
public:
    void add(const SampledWaveform& w, double wavelength);
    void add(std::span<const double> samples, double sample_rate, double wavelength);
    std::size_t count() const { return count_; }
    SampledWaveform mean() const;
    void reset();

private:
    std::vector<double> sum_;
    double sample_rate_ = 0.0;
    double wavelength_ = 0.0;
    std::size_t count_ = 0;
};

/// Reference samples for `seq` at `samples_per_bit`.
SampledWaveform correlation_reference(const BitSequence& seq, int samples_per_bit, double sample_rate,
                                      ReferenceMapping mapping);

/// c[k] = sum_j received[j + k] * reference[j], same length as `received`.
CorrelationResult cross_correlate(const SampledWaveform& received, const SampledWaveform& reference,
                                  int samples_per_bit = 1);

/// Aperiodic autocorrelation of the mapped sequence in bit-lag space,
/// lags -(n-1)..(n-1).
std::vector<double> aperiodic_autocorrelation(const BitSequence& seq, ReferenceMapping mapping);

struct SidelobeFilter {
    std::vector<double> taps;  // 2 * len(seq) + 1
    int tap_spacing = 1;       // samples between taps
    double regularization = 0.0;
    double condition_number = 0.0;  // of the regularized normal matrix
    double peak_sidelobe = 0.0;     // max |off-center output| / center output, bit domain
    std::size_t response_half_span = 0;  // bits; filtered response is zero beyond this lag

    std::size_t center() const { return taps.size() / 2; }
};

/// Regularized least-squares inverse of `acf` (odd length, centered):
/// minimizes |A g - acf[c] delta|^2 + reg * acf[c]^2 * |g|^2 with A the
/// convolution by `acf`, then rescales g so the center output equals acf[c].
SidelobeFilter design_deconvolution_filter(std::span<const double> acf, std::size_t ntaps, double regularization);

SidelobeFilter design_sidelobe_filter(const BitSequence& seq, double regularization,
                                      ReferenceMapping mapping = ReferenceMapping::ZeroMean, int samples_per_bit = 1);

/// Full (non-truncated) convolution of bit-lag response `x` with the filter taps.
std::vector<double> apply_filter_bits(std::span<const double> x, const SidelobeFilter& filt);

/// Bit-spaced sparse convolution at the sample rate; zero-phase, lag axis preserved.
CorrelationResult apply_filter(const CorrelationResult& corr, const SidelobeFilter& filt);

/// Designs each (sequence, mapping, regularization, spacing) once.
class SidelobeFilterCache {
public:
    std::shared_ptr<const SidelobeFilter> get(const BitSequence& seq, double regularization, ReferenceMapping mapping,
                                              int samples_per_bit);

    static SidelobeFilterCache& global();

private:
    std::mutex mutex_;
    std::map<std::vector<std::uint8_t>, std::shared_ptr<const SidelobeFilter>> cache_;
};

}  // namespace corrotdr
