#include "corrotdr/error.hpp"
#include "corrotdr/seqgen.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace corrotdr;

namespace {

// Independent Fibonacci LFSR stepping, written out bit by bit.
std::vector<int> hand_lfsr(int order, std::vector<int> taps, std::vector<int> state, std::size_t n)
{
    // state[0] is register bit 0 (least significant).
    std::vector<int> out;
    for (std::size_t i = 0; i < n; ++i) {
        int fb = 0;
        for (int t : taps) {
            fb ^= state[t - 1];
        }
        for (int b = order - 1; b > 0; --b) {
            state[b] = state[b - 1];
        }
        state[0] = fb;
        out.push_back(fb);
    }
    return out;
}

std::uint32_t window_at(const BitSequence& s, std::size_t start)
{
    std::uint32_t w = 0;
    for (int k = 0; k < s.order; ++k) {
        w = (w << 1) | s.bits[(start + k) % s.size()];
    }
    return w;
}

}  // namespace

TEST_CASE("prbs7 has length 127 and popcount 64")
{
    const auto s = gen_prbs(7, 0x60, 0x7f);
    CHECK(s.size() == 127);
    CHECK(s.popcount() == 64);
    CHECK(s.order == 7);
}

TEST_CASE("order 3 period matches a hand-stepped register")
{
    const auto s = gen_prbs(3, 0b110, 0b111);
    const std::vector<std::uint8_t> expected{0, 0, 1, 0, 1, 1, 1};
    CHECK(s.bits == expected);
}

TEST_CASE("generator agrees with bitwise stepping for every default polynomial up to order 12")
{
    for (int order = 3; order <= 12; ++order) {
        const auto poly = default_polynomial(order);
        std::vector<int> taps;
        for (int b = 0; b < order; ++b) {
            if (poly & (1u << b)) {
                taps.push_back(b + 1);
            }
        }
        const auto s = gen_prbs(order);
        const auto ref = hand_lfsr(order, taps, std::vector<int>(order, 1), s.size());
        REQUIRE(s.size() == ref.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            REQUIRE(s.bits[i] == ref[i]);
        }
    }
}

TEST_CASE("every nonzero window appears exactly once per period")
{
    for (int order = 3; order <= 12; ++order) {
        const auto s = gen_prbs(order);
        CHECK(s.size() == (std::size_t{1} << order) - 1);
        CHECK(s.popcount() == (std::size_t{1} << (order - 1)));
        std::set<std::uint32_t> seen;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto w = window_at(s, i);
            CHECK(w != 0);
            seen.insert(w);
        }
        CHECK(seen.size() == s.size());
    }
}

TEST_CASE("cyclic autocorrelation of the bipolar sequence is two-valued")
{
    for (int order = 3; order <= 10; ++order) {
        const auto s = gen_prbs(order);
        const long n = static_cast<long>(s.size());
        for (long lag = 0; lag < n; ++lag) {
            long acc = 0;
            for (long i = 0; i < n; ++i) {
                acc += (2 * s.bits[i] - 1) * (2 * s.bits[(i + lag) % n] - 1);
            }
            REQUIRE(acc == (lag == 0 ? n : -1));
        }
    }
}

TEST_CASE("any nonzero seed yields a rotation of the same period")
{
    const auto base = gen_prbs(7, 0x60, 0x7f);
    for (std::uint32_t seed : {1u, 0x2au, 0x40u}) {
        const auto s = gen_prbs(7, 0x60, seed);
        CHECK(s.popcount() == 64);
        bool rotation = false;
        for (std::size_t r = 0; r < 127 && !rotation; ++r) {
            bool same = true;
            for (std::size_t i = 0; i < 127 && same; ++i) {
                same = s.bits[i] == base.bits[(i + r) % 127];
            }
            rotation = same;
        }
        CHECK(rotation);
    }
}

TEST_CASE("generation is deterministic")
{
    CHECK(gen_prbs(9).bits == gen_prbs(9).bits);
}

TEST_CASE("invalid generator arguments")
{
    auto code_of = [](auto&& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        FAIL("expected an exception");
        return ErrorCode::Io;
    };
    CHECK(code_of([] { gen_prbs(7, 0x60, 0); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { gen_prbs(2, 0x3, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { gen_prbs(32, 0x1, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { gen_prbs(7, 0x60, 0x80); }) == ErrorCode::InvalidArgument);
    // x^4 + x^3 + x^2 + x + 1 has period 5, not 15.
    CHECK(code_of([] { gen_prbs(4, 0xf, 1); }) == ErrorCode::InvalidPolynomial);
    // Missing the x^order term.
    CHECK(code_of([] { gen_prbs(7, 0x30, 1); }) == ErrorCode::InvalidPolynomial);
    // x^7 + 1 only cycles the register.
    CHECK(code_of([] { gen_prbs(7, 0x40, 1); }) == ErrorCode::InvalidPolynomial);
}

TEST_CASE("full-scale burst arithmetic")
{
    const auto s = gen_prbs(7);
    BurstSpec spec;
    spec.bit_rate = 10e9;
    spec.period = 50e-6;
    spec.sample_rate = 40e9;
    const auto b = build_burst(s, spec);
    CHECK(b.size() == 2000000);
    CHECK(spec.samples_per_bit() == 4);
    CHECK(b.sample_rate == 40e9);
    // Last one-bit of the sequence ends inside the first 508 samples.
    std::size_t last_high = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b.samples[i] > 0) {
            last_high = i;
        }
    }
    CHECK(last_high < 508);
    CHECK(last_high == 4 * 127 - 1);  // sequence ends on a one
    for (std::size_t i = 0; i < 127; ++i) {
        for (int k = 0; k < 4; ++k) {
            REQUIRE(b.samples[i * 4 + k] == (s.bits[i] ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("extinction ratio sets the zero floor")
{
    const auto s = gen_prbs(7);
    BurstSpec spec;
    spec.period = 1e-6;
    const auto dark = build_burst(s, spec);
    for (std::size_t i = 0; i < dark.size(); ++i) {
        if (i >= 508 || !s.bits[i / 4]) {
            REQUIRE(dark.samples[i] == 0.0);
        }
    }
    spec.extinction_ratio_db = 10.0;
    spec.peak_level = 1.0;
    CHECK(spec.zero_level() == doctest::Approx(0.1).epsilon(1e-15));
    const auto lit = build_burst(s, spec);
    CHECK(lit.samples.back() == doctest::Approx(0.1).epsilon(1e-15));
    for (double v : lit.samples) {
        REQUIRE(v >= 0.0);
    }
}

TEST_CASE("burst decodes back to the sequence for extinction ratios above 3 dB")
{
    for (double er : {3.5, 6.0, 13.0, double(INFINITY)}) {
        const auto s = gen_prbs(7);
        BurstSpec spec;
        spec.period = 2e-6;
        spec.extinction_ratio_db = er;
        spec.peak_level = 2.5;
        const auto b = build_burst(s, spec);
        CHECK(decode_burst(b, spec, s.size()) == s.bits);
    }
}

TEST_CASE("burst spec validation")
{
    const auto s = gen_prbs(7);
    BurstSpec spec;
    spec.period = 12e-9;  // 120 bits, shorter than 127
    CHECK_THROWS_AS(build_burst(s, spec), Error);
    spec.period = 1e-6;
    spec.sample_rate = 25e9;  // 2.5 samples per bit
    CHECK_THROWS_AS(build_burst(s, spec), Error);
    spec.sample_rate = 40e9;
    spec.extinction_ratio_db = -1.0;
    CHECK_THROWS_AS(build_burst(s, spec), Error);
}
