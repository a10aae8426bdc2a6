#include "corrotdr/pipeline.hpp"
#include "corrotdr/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <future>
#include <numeric>

namespace corrotdr {

namespace {

BitSequence bits_from_reference(const SampledWaveform& reference, int samples_per_bit)
{
    require(samples_per_bit >= 1, "samples per bit must be positive");
    require(!reference.samples.empty() && reference.size() % static_cast<std::size_t>(samples_per_bit) == 0,
            "reference length must be a whole number of bits");
    const auto [lo, hi] = std::minmax_element(reference.samples.begin(), reference.samples.end());
    require(*hi > *lo, "reference burst carries no modulation");
    const double mid = 0.5 * (*lo + *hi);
    BitSequence seq;
    const std::size_t nbits = reference.size() / static_cast<std::size_t>(samples_per_bit);
    seq.bits.resize(nbits);
    for (std::size_t i = 0; i < nbits; ++i) {
        seq.bits[i] = reference.samples[i * samples_per_bit + samples_per_bit / 2] > mid ? 1 : 0;
    }
    seq.order = std::bit_width(nbits);
    return seq;
}

}  // namespace

LatencyPipeline::LatencyPipeline(const SampledWaveform& reference, int samples_per_bit, PipelineConfig config)
    : config_(config), samples_per_bit_(samples_per_bit), seq_(bits_from_reference(reference, samples_per_bit))
{
    require(config_.window_halfwidth >= 2, "fit window too small");
    require(config_.max_peaks >= 2, "max_peaks must allow at least the input and end reflections");
    corr_ref_ = correlation_reference(seq_, samples_per_bit_, reference.sample_rate, config_.mapping);
    filter_ = SidelobeFilterCache::global().get(seq_, config_.regularization, config_.mapping, samples_per_bit_);
}

CorrelationResult LatencyPipeline::correlate(const SampledWaveform& averaged) const
{
    // Remove the DC level so the finite reference sees no baseline step at the record edges.
    SampledWaveform centered = averaged;
    const double mean = std::accumulate(centered.samples.begin(), centered.samples.end(), 0.0) /
                        static_cast<double>(centered.size());
    for (double& v : centered.samples) {
        v -= mean;
    }
    return apply_filter(cross_correlate(centered, corr_ref_, samples_per_bit_), *filter_);
}

PipelineResult LatencyPipeline::analyze(const SampledWaveform& averaged) const
{
    PipelineResult res;
    res.filtered = correlate(averaged);
    res.candidates = detect_peaks(res.filtered, config_.threshold_rel, config_.min_separation,
                                  config_.max_peaks * std::max<std::size_t>(1, config_.candidate_factor),
                                  config_.min_snr);

    struct Fitted {
        PeakIndex peak;
        PeakEstimate est;
    };
    // Residue of the finite inverse filter around strong peaks is known in advance.
    std::vector<PeakIndex> plausible;
    const double span = static_cast<double>(filter_->response_half_span * static_cast<std::size_t>(samples_per_bit_));
    const double ratio = config_.sidelobe_margin * filter_->peak_sidelobe;
    for (const auto& pk : res.candidates) {
        bool residue = false;
        for (const auto& other : res.candidates) {
            const double dist = std::abs(static_cast<double>(pk.index) - static_cast<double>(other.index));
            if (other.value > pk.value && dist <= span && pk.value < ratio * other.value) {
                residue = true;
                break;
            }
        }
        if (residue) {
            ++res.rejected_sidelobe;
            spdlog::debug("peak at lag {} masked as filter residue", pk.index);
        } else {
            plausible.push_back(pk);
        }
    }

    std::vector<Fitted> fitted;
    for (const auto& pk : plausible) {
        if (pk.index < config_.window_halfwidth || pk.index + config_.window_halfwidth >= res.filtered.size()) {
            ++res.failed_fits;
            continue;
        }
        try {
            auto est = fit_gaussian(res.filtered, pk.index, config_.window_halfwidth);
            if (est.converged) {
                fitted.push_back({pk, est});
            } else {
                ++res.failed_fits;
            }
        } catch (const Error& e) {
            ++res.failed_fits;
            spdlog::debug("peak at lag {} not fitted: {}", pk.index, e.what());
        }
    }

    // Width gate around the strongest reflection, then the tallest survivors.
    if (!fitted.empty()) {
        const auto strongest = std::max_element(fitted.begin(), fitted.end(), [](const Fitted& a, const Fitted& b) {
            return a.peak.value < b.peak.value;
        });
        const double w = strongest->est.width;
        const double tol = 1.0 + config_.width_tolerance;
        std::vector<Fitted> kept;
        for (const auto& f : fitted) {
            if (f.est.width >= w / tol && f.est.width <= w * tol) {
                kept.push_back(f);
            } else {
                ++res.rejected_shape;
                spdlog::debug("peak at lag {} rejected: width {} vs {}", f.peak.index, f.est.width, w);
            }
        }
        std::stable_sort(kept.begin(), kept.end(),
                         [](const Fitted& a, const Fitted& b) { return a.peak.value > b.peak.value; });
        if (kept.size() > config_.max_peaks) {
            kept.resize(config_.max_peaks);
        }
        std::sort(kept.begin(), kept.end(), [](const Fitted& a, const Fitted& b) { return a.peak.index < b.peak.index; });
        for (const auto& f : kept) {
            res.peaks.push_back(f.peak);
            res.estimates.push_back(f.est);
        }
    }
    try {
        res.report = latency_report(res.estimates);
    } catch (const Error& e) {
        res.diagnostic = e.what();
    }
    return res;
}

void VectorTraceSource::fetch(std::size_t i, std::vector<double>& samples, double& wall_clock,
                              double& wavelength) const
{
    const auto& t = traces_[i];
    samples = t.waveform.samples;
    wall_clock = t.wall_clock;
    wavelength = t.wavelength;
}

void SimulatedTraceSource::fetch(std::size_t i, std::vector<double>& samples, double& wall_clock,
                                 double& wavelength) const
{
    wall_clock = wall_offset_ + static_cast<double>(i) * interval_;
    wavelength = lambda_;
    sim_.simulate_into(wall_clock, lambda_, index_offset_ + i, samples);
}

void for_each_trace(const TraceSource& source, std::size_t first, std::size_t count, int jobs,
                    const std::function<void(std::size_t, const std::vector<double>&, double, double)>& sink)
{
    const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
    std::vector<std::vector<double>> bufs(width);
    std::vector<double> walls(width);
    std::vector<double> lambdas(width);
    for (std::size_t base = first; base < first + count; base += width) {
        const std::size_t n = std::min(width, first + count - base);
        if (n == 1) {
            source.fetch(base, bufs[0], walls[0], lambdas[0]);
        } else {
            std::vector<std::future<void>> work;
            for (std::size_t j = 0; j < n; ++j) {
                work.push_back(std::async(std::launch::async,
                                          [&, j] { source.fetch(base + j, bufs[j], walls[j], lambdas[j]); }));
            }
            for (auto& w : work) {
                w.get();
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            sink(base + j, bufs[j], walls[j], lambdas[j]);
        }
    }
}

SampledWaveform average_source(const TraceSource& source, std::size_t first, std::size_t count, int jobs)
{
    require(count >= 1 && first + count <= source.count(), "averaging range outside the trace source");
    TraceAverager avg;
    for_each_trace(source, first, count, jobs,
                   [&](std::size_t, const std::vector<double>& samples, double, double lambda) {
                       avg.add(samples, source.sample_rate(), lambda);
                   });
    return avg.mean();
}

std::vector<SubsetRmsRow> rms_study(const TraceSource& source, const LatencyPipeline& pipeline,
                                    std::span<const std::size_t> subset_sizes)
{
    const std::size_t total = source.count();
    struct Lane {
        SubsetRmsRow row;
        TraceAverager avg;
    };
    std::vector<Lane> lanes;
    for (std::size_t s : subset_sizes) {
        require(s >= 1 && total / s >= 2, "subset size " + std::to_string(s) + " leaves fewer than two subsets");
        Lane lane;
        lane.row.subset_size = s;
        lanes.push_back(std::move(lane));
    }
    std::size_t usable = 0;
    for (const auto& l : lanes) {
        usable = std::max(usable, (total / l.row.subset_size) * l.row.subset_size);
    }

    for_each_trace(source, 0, usable, pipeline.config().jobs,
                   [&](std::size_t i, const std::vector<double>& samples, double, double lambda) {
                       for (auto& lane : lanes) {
                           const std::size_t s = lane.row.subset_size;
                           if (i >= (total / s) * s) {
                               continue;
                           }
                           lane.avg.add(samples, source.sample_rate(), lambda);
                           if (lane.avg.count() < s) {
                               continue;
                           }
                           const auto res = pipeline.analyze(lane.avg.mean());
                           lane.avg.reset();
                           ++lane.row.n_subsets;
                           if (res.report && res.report->consistency_error) {
                               lane.row.errors.push_back(*res.report->consistency_error);
                           } else {
                               ++lane.row.n_failed;
                               spdlog::info("subset of {} ending at trace {} unusable: {}", s, i,
                                            res.diagnostic.empty() ? "no triple-reflection peak" : res.diagnostic);
                           }
                       }
                   });

    std::vector<SubsetRmsRow> rows;
    for (auto& lane : lanes) {
        auto& row = lane.row;
        if (!row.errors.empty()) {
            double ss = 0.0;
            for (double e : row.errors) {
                ss += e * e;
            }
            row.rms_error = std::sqrt(ss / static_cast<double>(row.errors.size()));
        } else {
            row.rms_error = std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

SubsetRmsRow subset_rms(std::span<const Trace> traces, const SampledWaveform& reference, std::size_t subset_size,
                        int samples_per_bit, const PipelineConfig& config)
{
    const LatencyPipeline pipeline(reference, samples_per_bit, config);
    const VectorTraceSource source(traces);
    const std::size_t sizes[] = {subset_size};
    return rms_study(source, pipeline, sizes).front();
}

}  // namespace corrotdr
