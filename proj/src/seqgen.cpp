#include "corrotdr/seqgen.hpp"
#include "corrotdr/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace corrotdr {

std::size_t BitSequence::popcount() const
{
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::uint32_t default_polynomial(int order)
{
    // Primitive trinomials / pentanomials; x^n term included as bit n-1.
    auto mask = [](std::initializer_list<int> terms) {
        std::uint32_t m = 0;
        for (int t : terms) {
            m |= 1u << (t - 1);
        }
        return m;
    };
    switch (order) {
    case 3: return mask({3, 2});
    case 4: return mask({4, 3});
    case 5: return mask({5, 3});
    case 6: return mask({6, 5});
    case 7: return mask({7, 6});
    case 8: return mask({8, 6, 5, 4});
    case 9: return mask({9, 5});
    case 10: return mask({10, 7});
    case 11: return mask({11, 9});
    case 12: return mask({12, 11, 10, 4});
    case 13: return mask({13, 12, 11, 8});
    case 14: return mask({14, 13, 12, 2});
    case 15: return mask({15, 14});
    case 16: return mask({16, 15, 13, 4});
    case 17: return mask({17, 14});
    case 18: return mask({18, 11});
    case 19: return mask({19, 18, 17, 14});
    case 20: return mask({20, 17});
    case 21: return mask({21, 19});
    case 22: return mask({22, 21});
    case 23: return mask({23, 18});
    case 24: return mask({24, 23, 22, 17});
    case 25: return mask({25, 22});
    case 26: return mask({26, 6, 2, 1});
    case 27: return mask({27, 5, 2, 1});
    case 28: return mask({28, 25});
    case 29: return mask({29, 27});
    case 30: return mask({30, 6, 4, 1});
    case 31: return mask({31, 28});
    default: break;
    }
    fail(ErrorCode::InvalidArgument, "no default polynomial for PRBS order " + std::to_string(order));
}

BitSequence gen_prbs(int order, std::uint32_t polynomial, std::uint32_t seed)
{
    require(order >= 3 && order <= 31, "PRBS order must be in [3, 31]");
    const std::uint32_t state_mask = (1u << order) - 1u;
    require(seed != 0, "LFSR seed must be nonzero");
    require((seed & ~state_mask) == 0, "LFSR seed wider than the register");
    if ((polynomial & ~state_mask) != 0 || (polynomial & (1u << (order - 1))) == 0) {
        fail(ErrorCode::InvalidPolynomial, "tap mask must include x^order and no higher terms");
    }

    const std::size_t period = (std::size_t{1} << order) - 1;
    BitSequence seq;
    seq.order = order;
    seq.polynomial = polynomial;
    seq.bits.reserve(period);

    std::uint32_t state = seed;
    for (std::size_t i = 0; i < period; ++i) {
        const auto fb = static_cast<std::uint32_t>(std::popcount(state & polynomial) & 1);
        state = ((state << 1) | fb) & state_mask;
        seq.bits.push_back(static_cast<std::uint8_t>(fb));
        if ((state == seed || state == 0) && i + 1 < period) {
            fail(ErrorCode::InvalidPolynomial,
                 "LFSR period " + std::to_string(i + 1) + " is shorter than 2^order - 1; polynomial is not primitive");
        }
    }
    if (state != seed) {
        fail(ErrorCode::InvalidPolynomial, "LFSR did not return to its seed after 2^order - 1 steps");
    }
    return seq;
}

int BurstSpec::samples_per_bit() const
{
    return static_cast<int>(std::lround(sample_rate / bit_rate));
}

std::size_t BurstSpec::period_samples() const
{
    return static_cast<std::size_t>(std::llround(period * sample_rate));
}

double BurstSpec::zero_level() const
{
    if (std::isinf(extinction_ratio_db)) {
        return 0.0;
    }
    return peak_level * std::pow(10.0, -extinction_ratio_db / 10.0);
}

void BurstSpec::validate(std::size_t sequence_length) const
{
    require(bit_rate > 0 && sample_rate > 0 && period > 0, "burst rates and period must be positive");
    const double ratio = sample_rate / bit_rate;
    require(ratio >= 1.0 && std::abs(ratio - std::round(ratio)) < 1e-9 * ratio,
            "sample_rate must be an integer multiple of bit_rate");
    require(extinction_ratio_db > 0, "extinction ratio must be positive (dB)");
    require(peak_level > 0, "peak level must be positive");
    require(period * bit_rate + 1e-9 >= static_cast<double>(sequence_length),
            "burst period too short for the PRBS sequence");
}

SampledWaveform build_burst(const BitSequence& seq, const BurstSpec& spec)
{
    spec.validate(seq.size());
    const int spb = spec.samples_per_bit();
    const double floor = spec.zero_level();

    SampledWaveform out;
    out.sample_rate = spec.sample_rate;
    out.t0 = 0.0;
    out.samples.assign(spec.period_samples(), floor);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq.bits[i]) {
            std::fill_n(out.samples.begin() + static_cast<std::ptrdiff_t>(i * spb), spb, spec.peak_level);
        }
    }
    return out;
}

std::vector<std::uint8_t> decode_burst(const SampledWaveform& burst, const BurstSpec& spec, std::size_t nbits)
{
    const int spb = spec.samples_per_bit();
    require(burst.size() >= nbits * static_cast<std::size_t>(spb), "burst shorter than requested bit count");
    const double mid = 0.5 * (spec.peak_level + spec.zero_level());
    std::vector<std::uint8_t> bits(nbits);
    for (std::size_t i = 0; i < nbits; ++i) {
        // Sample in the middle of the bit cell.
        const double v = burst.samples[i * spb + spb / 2];
        bits[i] = v > mid ? 1 : 0;
    }
    return bits;
}

}  // namespace corrotdr
