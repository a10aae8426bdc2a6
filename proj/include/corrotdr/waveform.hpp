#pragma once

#include <cstddef>
#include <vector>

namespace corrotdr {

/// Uniformly sampled intensity record. Sample k sits at t0 + k / sample_rate.
struct SampledWaveform {
    std::vector<double> samples;
    double sample_rate = 0.0;
    double t0 = 0.0;

    std::size_t size() const { return samples.size(); }
    double time_at(double index) const { return t0 + index / sample_rate; }
};

}  // namespace corrotdr
