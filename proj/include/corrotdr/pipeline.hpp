#pragma once

#include "corrotdr/corrproc.hpp"
#include "corrotdr/peakfit.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace corrotdr {

struct PipelineConfig {
    double threshold_rel = 0.01;
    double min_snr = 8.0;             // MAD-based noise gate; 0 disables
    double min_separation = 10e-9;    // s
    std::size_t max_peaks = 3;
    std::size_t window_halfwidth = 12;  // samples
    double regularization = 1e-3;     // relative to the autocorrelation peak
    ReferenceMapping mapping = ReferenceMapping::Unipolar;
    /// Candidates fitted per analysis, as a multiple of max_peaks.
    std::size_t candidate_factor = 4;
    /// Accepted fitted widths lie within [w / (1 + tol), w * (1 + tol)] of the
    /// strongest peak's width w; rejects filter residue, which fits broad.
    double width_tolerance = 0.5;
    /// A candidate inside the filtered response of a stronger peak is treated
    /// as filter residue when below margin * peak_sidelobe of that peak; 0 disables.
    double sidelobe_margin = 2.0;
    int jobs = 1;
};

struct PipelineResult {
    CorrelationResult filtered;
    std::vector<PeakIndex> candidates;
    std::vector<PeakIndex> peaks;          // accepted, lag order
    std::vector<PeakEstimate> estimates;   // fits of `peaks`, same order
    std::optional<LatencyReport> report;
    std::size_t failed_fits = 0;           // candidates whose fit threw or did not converge
    std::size_t rejected_shape = 0;        // converged candidates outside the width gate
    std::size_t rejected_sidelobe = 0;     // candidates explained as residue of a stronger peak
    std::string diagnostic;  // non-empty when no report could be formed
};

/// average -> correlate -> sidelobe filter -> detect -> sidelobe mask -> fit -> width gate -> report.
class LatencyPipeline {
public:
    /// `reference` is the transmitted burst segment (sequence length times
    /// samples per bit); the bit pattern is recovered from it.
    LatencyPipeline(const SampledWaveform& reference, int samples_per_bit, PipelineConfig config);

    const PipelineConfig& config() const { return config_; }
    const BitSequence& sequence() const { return seq_; }
    const SidelobeFilter& filter() const { return *filter_; }

    CorrelationResult correlate(const SampledWaveform& averaged) const;
    PipelineResult analyze(const SampledWaveform& averaged) const;

private:
    PipelineConfig config_;
    int samples_per_bit_;
    BitSequence seq_;
    SampledWaveform corr_ref_;
    std::shared_ptr<const SidelobeFilter> filter_;
};

/// Random-access trace provider (file-backed or simulated).
class TraceSource {
public:
    virtual ~TraceSource() = default;
    virtual std::size_t count() const = 0;
    virtual double sample_rate() const = 0;
    /// Fills `samples` with trace i; must be safe to call concurrently.
    virtual void fetch(std::size_t i, std::vector<double>& samples, double& wall_clock, double& wavelength) const = 0;
};

class VectorTraceSource final : public TraceSource {
public:
    explicit VectorTraceSource(std::span<const Trace> traces) : traces_(traces) {}
    std::size_t count() const override { return traces_.size(); }
    double sample_rate() const override { return traces_.empty() ? 0.0 : traces_.front().waveform.sample_rate; }
    void fetch(std::size_t i, std::vector<double>& samples, double& wall_clock, double& wavelength) const override;

private:
    std::span<const Trace> traces_;
};

/// Renders traces on demand: trace i is captured at wall_offset + i * interval
/// with noise stream index_offset + i.
class SimulatedTraceSource final : public TraceSource {
public:
    SimulatedTraceSource(const TraceSimulator& sim, std::size_t count, double interval, double lambda_nm,
                         double wall_offset = 0.0, std::uint64_t index_offset = 0)
        : sim_(sim), count_(count), interval_(interval), lambda_(lambda_nm), wall_offset_(wall_offset),
          index_offset_(index_offset)
    {
    }
    std::size_t count() const override { return count_; }
    double sample_rate() const override { return sim_.burst().sample_rate; }
    void fetch(std::size_t i, std::vector<double>& samples, double& wall_clock, double& wavelength) const override;

private:
    const TraceSimulator& sim_;
    std::size_t count_;
    double interval_;
    double lambda_;
    double wall_offset_;
    std::uint64_t index_offset_;
};

/// Streams traces [first, first + count) in order, fetching up to `jobs` at a
/// time in parallel; `sink` sees them strictly in index order.
void for_each_trace(const TraceSource& source, std::size_t first, std::size_t count, int jobs,
                    const std::function<void(std::size_t, const std::vector<double>&, double, double)>& sink);

/// Mean of traces [first, first + count) of `source`.
SampledWaveform average_source(const TraceSource& source, std::size_t first, std::size_t count, int jobs);

struct SubsetRmsRow {
    std::size_t subset_size = 0;
    std::size_t n_subsets = 0;
    double rms_error = 0.0;       // s, RMS of triple-consistency error over usable subsets
    std::size_t n_failed = 0;     // subsets without a converged three-peak report
    std::vector<double> errors;   // per-subset consistency errors (usable subsets)
};

/// One pass over `source`; every size partitions the traces into consecutive
/// disjoint subsets. Sizes allowing fewer than two subsets throw.
std::vector<SubsetRmsRow> rms_study(const TraceSource& source, const LatencyPipeline& pipeline,
                                    std::span<const std::size_t> subset_sizes);

SubsetRmsRow subset_rms(std::span<const Trace> traces, const SampledWaveform& reference, std::size_t subset_size,
                        int samples_per_bit, const PipelineConfig& config);

}  // namespace corrotdr
