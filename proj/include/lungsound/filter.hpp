#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "lungsound/audio.hpp"
#include "lungsound/error.hpp"

namespace lungsound {

// One second-order section, a0 normalized to 1.
struct SosSection {
    double b0, b1, b2, a1, a2;
};

struct FilterDesign {
    int order = 0;
    double low_hz = 0.0;
    double high_hz = 0.0;
    int sample_rate = 0;
};

struct FilterCoefficients {
    std::vector<SosSection> sections;
    FilterDesign design;
};

namespace filter_detail {

using cplx = std::complex<double>;

// Largest pole magnitude of a section; must stay inside the unit circle.
inline double pole_radius(const SosSection& s) {
    const cplx disc = cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0);
    const cplx r = std::sqrt(disc);
    const cplx p1 = (-s.a1 + r) / 2.0;
    const cplx p2 = (-s.a1 - r) / 2.0;
    return std::max(std::abs(p1), std::abs(p2));
}

}  // namespace filter_detail

// Complex frequency response of the cascade at `freq_hz`.
inline std::complex<double> filter_response(const FilterCoefficients& coeffs, double freq_hz) {
    using filter_detail::cplx;
    const double w = 2.0 * M_PI * freq_hz / coeffs.design.sample_rate;
    const cplx z1 = std::exp(cplx(0.0, -w));
    const cplx z2 = z1 * z1;
    cplx h(1.0, 0.0);
    for (const SosSection& s : coeffs.sections) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return h;
}

// Digital Butterworth band-pass: analog prototype, lowpass-to-bandpass
// transform, bilinear transform, then pole pairing into second-order
// sections. Each section keeps one zero at z=1 and one at z=-1, so DC and
// Nyquist are structural zeros. Gain is spread evenly across sections and
// normalized to unity at the geometric-mean center frequency.
inline FilterCoefficients design_butterworth_bandpass(int order, double low_hz, double high_hz,
                                                      int sample_rate) {
    using filter_detail::cplx;
    if (order < 1) throw ConfigError("butterworth: order must be >= 1");
    if (!(0.0 < low_hz && low_hz < high_hz && high_hz < sample_rate / 2.0))
        throw ConfigError("butterworth: need 0 < low < high < sample_rate/2, got [" +
                          std::to_string(low_hz) + ", " + std::to_string(high_hz) + "] at " +
                          std::to_string(sample_rate) + " Hz");

    const double fs2 = 2.0 * sample_rate;
    const double w1 = fs2 * std::tan(M_PI * low_hz / sample_rate);
    const double w2 = fs2 * std::tan(M_PI * high_hz / sample_rate);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    // analog lowpass prototype poles on the unit half-plane circle
    std::vector<cplx> analog;
    for (int k = 0; k < order; ++k) {
        const double angle = M_PI * (2.0 * k + order + 1.0) / (2.0 * order);
        analog.push_back(std::exp(cplx(0.0, angle)));
    }

    // lowpass -> bandpass doubles the pole count
    std::vector<cplx> poles;
    for (const cplx& p : analog) {
        const cplx t = 0.5 * bw * p;
        const cplx r = std::sqrt(t * t - w0 * w0);
        poles.push_back(t + r);
        poles.push_back(t - r);
    }

    // bilinear transform to the z-plane
    for (cplx& p : poles) p = (fs2 + p) / (fs2 - p);

    // split conjugate pairs from real poles
    std::vector<cplx> upper;
    std::vector<double> reals;
    for (const cplx& p : poles) {
        if (std::fabs(p.imag()) > 1e-9)
            upper.push_back(cplx(p.real(), std::fabs(p.imag())));
        else
            reals.push_back(p.real());
    }
    // conjugates appear twice in `upper`; keep one of each
    std::sort(upper.begin(), upper.end(), [](const cplx& a, const cplx& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    std::vector<cplx> pair_poles;
    for (std::size_t i = 0; i + 1 < upper.size(); i += 2) pair_poles.push_back(upper[i]);
    std::sort(reals.begin(), reals.end());

    FilterCoefficients out;
    out.design = FilterDesign{order, low_hz, high_hz, sample_rate};
    for (const cplx& p : pair_poles) {
        out.sections.push_back(SosSection{1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)});
    }
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
        out.sections.push_back(
            SosSection{1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
    }
    if (static_cast<int>(out.sections.size()) != order)
        throw Error("butterworth: internal pole pairing failure");

    for (const SosSection& s : out.sections) {
        if (filter_detail::pole_radius(s) >= 1.0) throw Error("butterworth: unstable section");
    }

    const double center_hz = std::sqrt(low_hz * high_hz);
    const double g = std::abs(filter_response(out, center_hz));
    if (g <= 0.0) throw Error("butterworth: degenerate center-frequency gain");
    const double per_section = std::pow(1.0 / g, 1.0 / order);
    for (SosSection& s : out.sections) {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    return out;
}

// Cascaded direct-form-II-transposed filtering with zero initial state.
inline AudioClip apply_filter(const FilterCoefficients& coeffs, const AudioClip& clip) {
    if (clip.sample_rate != coeffs.design.sample_rate)
        throw ConfigError("apply_filter: clip rate " + std::to_string(clip.sample_rate) +
                          " != design rate " + std::to_string(coeffs.design.sample_rate));
    AudioClip out{clip.samples, clip.sample_rate};
    for (const SosSection& s : coeffs.sections) {
        double z1 = 0.0, z2 = 0.0;
        for (double& x : out.samples) {
            const double y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            x = y;
        }
    }
    return out;
}

}  // namespace lungsound
