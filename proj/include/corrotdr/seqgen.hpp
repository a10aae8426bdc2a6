#pragma once

#include "corrotdr/waveform.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace corrotdr {

/// One full period of a maximal-length LFSR sequence.
///
/// `polynomial` is a feedback tap mask: bit (k-1) set means the term x^k is
/// present; the constant term is implicit. x^7 + x^6 + 1 is 0x60.
struct BitSequence {
    std::vector<std::uint8_t> bits;
    int order = 0;
    std::uint32_t polynomial = 0;

    std::size_t size() const { return bits.size(); }
    std::size_t popcount() const;
};

/// Tap mask of a known primitive polynomial for orders 3..31; throws for
/// orders without a table entry.
std::uint32_t default_polynomial(int order);

/// Fibonacci LFSR; the emitted bit is the feedback bit shifted into the
/// register. Throws InvalidArgument for a bad order or seed and
/// InvalidPolynomial when the state recurs before 2^order - 1 steps.
BitSequence gen_prbs(int order, std::uint32_t polynomial, std::uint32_t seed);

inline BitSequence gen_prbs(int order) { return gen_prbs(order, default_polynomial(order), (1u << order) - 1u); }

struct BurstSpec {
    double bit_rate = 10e9;
    double period = 50e-6;
    double sample_rate = 40e9;
    /// dB; +infinity means a perfectly dark zero level.
    double extinction_ratio_db = std::numeric_limits<double>::infinity();
    double peak_level = 1.0;

    int samples_per_bit() const;
    std::size_t period_samples() const;
    double zero_level() const;
    /// Throws InvalidArgument unless the spec can carry `sequence_length` bits.
    void validate(std::size_t sequence_length) const;
};

/// NRZ rendering of `seq`, padded with the zero level to one full period.
SampledWaveform build_burst(const BitSequence& seq, const BurstSpec& spec);

/// Threshold the burst at mid-level and return the first `nbits` bits.
std::vector<std::uint8_t> decode_burst(const SampledWaveform& burst, const BurstSpec& spec, std::size_t nbits);

}  // namespace corrotdr
