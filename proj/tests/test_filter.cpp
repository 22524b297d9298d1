#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "lungsound/filter.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace lungsound;
using Catch::Approx;

namespace {
FilterCoefficients paper_default() { return design_butterworth_bandpass(5, 50.0, 1800.0, 4000); }
}  // namespace

TEST_CASE("butterworth design records its parameters") {
    const FilterCoefficients c = paper_default();
    REQUIRE(c.design.order == 5);
    REQUIRE(c.design.low_hz == 50.0);
    REQUIRE(c.design.high_hz == 1800.0);
    REQUIRE(c.design.sample_rate == 4000);
    REQUIRE(c.sections.size() == 5);
}

TEST_CASE("butterworth rejects bad band edges and order") {
    REQUIRE_THROWS_AS(design_butterworth_bandpass(0, 50.0, 1800.0, 4000), ConfigError);
    REQUIRE_THROWS_AS(design_butterworth_bandpass(5, 1800.0, 50.0, 4000), ConfigError);
    REQUIRE_THROWS_AS(design_butterworth_bandpass(5, 50.0, 2000.0, 4000), ConfigError);
    REQUIRE_THROWS_AS(design_butterworth_bandpass(5, 0.0, 1800.0, 4000), ConfigError);
}

TEST_CASE("every section has poles strictly inside the unit circle") {
    for (int order : {1, 2, 3, 5, 8}) {
        const FilterCoefficients c = design_butterworth_bandpass(order, 50.0, 1800.0, 4000);
        REQUIRE(static_cast<int>(c.sections.size()) == order);
        for (const SosSection& s : c.sections) {
            const std::complex<double> disc(s.a1 * s.a1 - 4.0 * s.a2, 0.0);
            const std::complex<double> r = std::sqrt(disc);
            REQUIRE(std::abs((-s.a1 + r) / 2.0) < 1.0);
            REQUIRE(std::abs((-s.a1 - r) / 2.0) < 1.0);
        }
    }
}

TEST_CASE("DC gain is a structural zero") {
    const FilterCoefficients c = paper_default();
    // numerator of each section carries the (1 - z^-1) factor: b0 + b1 + b2 = 0
    for (const SosSection& s : c.sections) REQUIRE(s.b0 + s.b1 + s.b2 == 0.0);
    REQUIRE(oracle::sos_magnitude(c.sections, 0.0, 4000) == 0.0);
}

TEST_CASE("stopband attenuation at 1 Hz and 1999 Hz is at least 60 dB below passband") {
    const FilterCoefficients c = paper_default();
    const double passband = oracle::sos_magnitude(c.sections, 300.0, 4000);
    const double lo = oracle::sos_magnitude(c.sections, 1.0, 4000);
    const double hi = oracle::sos_magnitude(c.sections, 1999.0, 4000);
    REQUIRE(20.0 * std::log10(passband / lo) >= 60.0);
    REQUIRE(20.0 * std::log10(passband / hi) >= 60.0);
}

TEST_CASE("center-frequency gain is within 1 dB of unity") {
    const FilterCoefficients c = paper_default();
    const double center = std::sqrt(50.0 * 1800.0);
    const double mag = oracle::sos_magnitude(c.sections, center, 4000);
    REQUIRE(std::abs(20.0 * std::log10(mag)) <= 1.0);
}

TEST_CASE("apply_filter preserves length and rejects rate mismatch") {
    const FilterCoefficients c = paper_default();
    const AudioClip clip = fixtures::noise(0.5, 4000, 0.2, 7);
    REQUIRE(apply_filter(c, clip).samples.size() == clip.samples.size());

    AudioClip wrong = clip;
    wrong.sample_rate = 8000;
    REQUIRE_THROWS_AS(apply_filter(c, wrong), ConfigError);
}

TEST_CASE("filtering is linear to 1e-9 relative") {
    const FilterCoefficients c = paper_default();
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const AudioClip x = fixtures::noise(0.25, 4000, 0.5, rng.next_u64());
        const AudioClip y = fixtures::noise(0.25, 4000, 0.5, rng.next_u64());
        const double a = rng.uniform(-2.0, 2.0);
        const double b = rng.uniform(-2.0, 2.0);

        AudioClip mix;
        mix.sample_rate = 4000;
        for (std::size_t i = 0; i < x.samples.size(); ++i)
            mix.samples.push_back(a * x.samples[i] + b * y.samples[i]);

        const AudioClip fx = apply_filter(c, x);
        const AudioClip fy = apply_filter(c, y);
        const AudioClip fmix = apply_filter(c, mix);

        double scale = 0.0;
        for (double v : fmix.samples) scale = std::max(scale, std::fabs(v));
        for (std::size_t i = 0; i < fmix.samples.size(); ++i) {
            const double expect = a * fx.samples[i] + b * fy.samples[i];
            REQUIRE(std::abs(fmix.samples[i] - expect) <= 1e-9 * scale);
        }
    }
}

TEST_CASE("all-zero input stays all-zero and scaling commutes") {
    const FilterCoefficients c = paper_default();
    AudioClip zero;
    zero.sample_rate = 4000;
    zero.samples.assign(1000, 0.0);
    for (double v : apply_filter(c, zero).samples) REQUIRE(v == 0.0);

    const AudioClip x = fixtures::noise(0.25, 4000, 0.3, 11);
    AudioClip x2 = x;
    for (double& v : x2.samples) v *= 2.0;
    const AudioClip fx = apply_filter(c, x);
    const AudioClip fx2 = apply_filter(c, x2);
    for (std::size_t i = 0; i < fx.samples.size(); ++i)
        REQUIRE(fx2.samples[i] == Approx(2.0 * fx.samples[i]).epsilon(1e-9).margin(1e-15));
}

TEST_CASE("constant input is rejected in steady state") {
    const FilterCoefficients c = paper_default();
    AudioClip ones;
    ones.sample_rate = 4000;
    ones.samples.assign(16000, 1.0);
    const AudioClip out = apply_filter(c, ones);
    for (std::size_t i = out.samples.size() / 2; i < out.samples.size(); ++i)
        REQUIRE(std::abs(out.samples[i]) < 1e-3);
}

TEST_CASE("impulse response decays") {
    const FilterCoefficients c = paper_default();
    const int n = 4000;
    AudioClip impulse;
    impulse.sample_rate = 4000;
    impulse.samples.assign(8 * n, 0.0);
    impulse.samples[0] = 1.0;
    const AudioClip h = apply_filter(c, impulse);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 4 * n; ++i) early += h.samples[i] * h.samples[i];
    for (int i = 4 * n; i < 8 * n; ++i) late += h.samples[i] * h.samples[i];
    REQUIRE(late < early);
}
