#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lungsound/audio.hpp"
#include "lungsound/bytes.hpp"
#include "lungsound/error.hpp"

namespace lungsound {

// Row-major float grid: rows x cols.
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<float> v;

    Grid() = default;
    Grid(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0f) {}
    float& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

struct SpectrogramConfig {
    int window_len = 256;
    int hop_len = 128;
    int n_mels = 64;
    double fmin = 50.0;
    double fmax = 2000.0;
    double log_floor = 1e-10;

    void validate() const {
        if (hop_len < 1 || hop_len > window_len)
            throw ConfigError("spectrogram: need 0 < hop_len <= window_len");
        if (!(0.0 <= fmin && fmin < fmax)) throw ConfigError("spectrogram: need 0 <= fmin < fmax");
        if (n_mels < 2) throw ConfigError("spectrogram: n_mels must be >= 2");
        if (log_floor <= 0.0) throw ConfigError("spectrogram: log_floor must be positive");
    }

    bool operator==(const SpectrogramConfig&) const = default;
};

// Log-mel energy grid (n_mels rows x n_frames columns). bin_edges_hz holds the
// triangle base span of each retained mel row.
struct MelSpectrogram {
    Grid values;
    std::vector<std::pair<double, double>> bin_edges_hz;
    SpectrogramConfig config;
    int sample_rate = 0;

    int n_mels() const { return values.rows; }
    int n_frames() const { return values.cols; }
};

struct BlankClipConfig {
    double floor_margin_db = 1.0;
    double protect_below_hz = 1400.0;

    void validate() const {
        if (floor_margin_db < 0.0) throw ConfigError("blank clip: floor_margin must be >= 0");
        if (protect_below_hz < 0.0) throw ConfigError("blank clip: protect_below_hz must be >= 0");
    }

    bool operator==(const BlankClipConfig&) const = default;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Frame count convention: the tally rounds to the nearest whole frame, so a
// trailing hop-remainder of at least half a hop yields one more (zero-padded)
// frame. 28000 samples at window 256 / hop 128 give 218 frames.
inline int stft_frame_count(std::int64_t n_samples, int window_len, int hop_len) {
    if (n_samples < window_len) return 0;
    return 1 + static_cast<int>((n_samples - window_len + hop_len / 2) / hop_len);
}

namespace spectro_detail {

// Periodic Hann: bin-centered sinusoids land in exactly three DFT bins, so
// genuinely empty bands stay at exact zero instead of picking up sidelobes.
inline std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
    return w;
}

// In-place iterative radix-2 FFT.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> t = w * a[i + k + len / 2];
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
                w *= wl;
            }
        }
    }
}

// Magnitudes of DFT bins 0..n/2 of a real frame. Radix-2 when possible,
// direct evaluation otherwise (windows are short).
inline void real_dft_magnitudes(const std::vector<double>& frame, std::vector<double>& mags) {
    const int n = static_cast<int>(frame.size());
    const int n_bins = n / 2 + 1;
    mags.assign(n_bins, 0.0);
    if ((n & (n - 1)) == 0) {
        std::vector<std::complex<double>> a(frame.begin(), frame.end());
        fft_pow2(a);
        for (int k = 0; k < n_bins; ++k) mags[k] = std::abs(a[k]);
    } else {
        for (int k = 0; k < n_bins; ++k) {
            double re = 0.0, im = 0.0;
            const double w = -2.0 * M_PI * k / n;
            for (int i = 0; i < n; ++i) {
                re += frame[i] * std::cos(w * i);
                im += frame[i] * std::sin(w * i);
            }
            mags[k] = std::hypot(re, im);
        }
    }
}

}  // namespace spectro_detail

// Hann-windowed STFT magnitudes: (window_len/2 + 1) bins x n_frames.
inline Grid stft_magnitude(const AudioClip& clip, const SpectrogramConfig& config) {
    config.validate();
    const int win = config.window_len;
    const int hop = config.hop_len;
    const std::int64_t n = static_cast<std::int64_t>(clip.samples.size());
    if (n < win)
        throw DataError("stft: clip of " + std::to_string(n) + " samples is shorter than one window (" +
                        std::to_string(win) + ")");

    const int n_frames = stft_frame_count(n, win, hop);
    const int n_bins = win / 2 + 1;
    const std::vector<double> window = spectro_detail::hann_window(win);

    Grid out(n_bins, n_frames);
    std::vector<double> frame(win);
    std::vector<double> mags;
    for (int f = 0; f < n_frames; ++f) {
        const std::int64_t start = static_cast<std::int64_t>(f) * hop;
        for (int i = 0; i < win; ++i) {
            const std::int64_t idx = start + i;
            frame[i] = (idx < n ? clip.samples[idx] : 0.0) * window[i];
        }
        spectro_detail::real_dft_magnitudes(frame, mags);
        for (int b = 0; b < n_bins; ++b) out.at(b, f) = static_cast<float>(mags[b]);
    }
    return out;
}

// Triangular mel filterbank (n_mels x n_bins) plus each filter's base span in Hz.
inline Grid mel_filterbank(const SpectrogramConfig& config, int sample_rate,
                           std::vector<std::pair<double, double>>* edges_out = nullptr) {
    config.validate();
    if (sample_rate <= 0) throw ConfigError("mel_filterbank: sample_rate must be positive");
    if (config.fmax > sample_rate / 2.0)
        throw ConfigError("mel_filterbank: fmax above Nyquist");

    const int n_bins = config.window_len / 2 + 1;
    const int n_mels = config.n_mels;
    const double mel_lo = hz_to_mel(config.fmin);
    const double mel_hi = hz_to_mel(config.fmax);

    std::vector<double> points(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        points[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

    Grid fb(n_mels, n_bins);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = points[m], center = points[m + 1], hi = points[m + 2];
        double area = 0.0;
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / config.window_len;
            double w = 0.0;
            if (f > lo && f < center)
                w = (f - lo) / (center - lo);
            else if (f >= center && f < hi)
                w = (hi - f) / (hi - center);
            fb.at(m, k) = static_cast<float>(w);
            area += w;
        }
        if (area <= 0.0)
            throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                              " has no FFT bins; window too short for n_mels");
    }
    if (edges_out) {
        edges_out->clear();
        for (int m = 0; m < n_mels; ++m) edges_out->push_back({points[m], points[m + 2]});
    }
    return fb;
}

// Log-mel spectrogram: log(max(filterbank * |STFT|^2, log_floor)).
inline MelSpectrogram mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& config) {
    const Grid mag = stft_magnitude(clip, config);
    MelSpectrogram out;
    out.config = config;
    out.sample_rate = clip.sample_rate;
    const Grid fb = mel_filterbank(config, clip.sample_rate, &out.bin_edges_hz);

    out.values = Grid(config.n_mels, mag.cols);
    for (int m = 0; m < config.n_mels; ++m) {
        for (int f = 0; f < mag.cols; ++f) {
            double acc = 0.0;
            for (int b = 0; b < mag.rows; ++b) {
                const double w = fb.at(m, b);
                if (w != 0.0) {
                    const double a = mag.at(b, f);
                    acc += w * a * a;
                }
            }
            out.values.at(m, f) = static_cast<float>(std::log(std::max(acc, config.log_floor)));
        }
    }
    return out;
}

// Scan from the top (highest-frequency) row downward and drop the contiguous
// run of rows whose time-mean sits within floor_margin of the grid's minimum
// cell. Rows whose span reaches at or below protect_below_hz are never
// dropped.
inline MelSpectrogram blank_region_clip(const MelSpectrogram& spec, const BlankClipConfig& config) {
    config.validate();
    if (spec.values.rows == 0 || spec.values.cols == 0)
        throw DataError("blank_region_clip: empty spectrogram");

    double global_min = spec.values.v[0];
    for (float x : spec.values.v) global_min = std::min(global_min, static_cast<double>(x));
    // cells are natural-log power; dB margin -> ln units
    const double margin_ln = config.floor_margin_db * std::log(10.0) / 10.0;

    int keep_rows = spec.values.rows;
    while (keep_rows > 0) {
        const int row = keep_rows - 1;
        if (spec.bin_edges_hz[row].first <= config.protect_below_hz) break;
        double mean = 0.0;
        for (int f = 0; f < spec.values.cols; ++f) mean += spec.values.at(row, f);
        mean /= spec.values.cols;
        if (mean > global_min + margin_ln) break;
        --keep_rows;
    }

    if (keep_rows == spec.values.rows) return spec;
    MelSpectrogram out;
    out.config = spec.config;
    out.sample_rate = spec.sample_rate;
    out.values = Grid(keep_rows, spec.values.cols);
    std::copy(spec.values.v.begin(),
              spec.values.v.begin() + static_cast<std::size_t>(keep_rows) * spec.values.cols,
              out.values.v.begin());
    out.bin_edges_hz.assign(spec.bin_edges_hz.begin(), spec.bin_edges_hz.begin() + keep_rows);
    return out;
}

// ---- portable grid file: header + row-major little-endian float32 ----

inline void write_melgrid(const std::string& path, const MelSpectrogram& spec) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("melgrid: cannot create file: " + path);
    os.write("LSGRID\0", 7);
    put_u16(os, 1);  // format version
    put_u32(os, static_cast<std::uint32_t>(spec.values.rows));
    put_u32(os, static_cast<std::uint32_t>(spec.values.cols));
    put_u32(os, static_cast<std::uint32_t>(spec.sample_rate));
    put_u32(os, static_cast<std::uint32_t>(spec.config.window_len));
    put_u32(os, static_cast<std::uint32_t>(spec.config.hop_len));
    put_u32(os, static_cast<std::uint32_t>(spec.config.n_mels));
    put_f64(os, spec.config.fmin);
    put_f64(os, spec.config.fmax);
    put_f64(os, spec.config.log_floor);
    for (const auto& [lo, hi] : spec.bin_edges_hz) {
        put_f64(os, lo);
        put_f64(os, hi);
    }
    for (float x : spec.values.v) put_f32(os, x);
    if (!os) throw DataError("melgrid: write failed: " + path);
}

inline MelSpectrogram read_melgrid(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("melgrid: cannot open file: " + path);
    char magic[7];
    if (!is.read(magic, 7) || std::string(magic, 7) != std::string("LSGRID\0", 7))
        throw DataError("melgrid: bad magic in " + path);
    const std::uint16_t version = get_u16(is, "melgrid.version");
    if (version != 1) throw DataError("melgrid: unsupported version in " + path);

    MelSpectrogram spec;
    const int rows = static_cast<int>(get_u32(is, "melgrid.rows"));
    const int cols = static_cast<int>(get_u32(is, "melgrid.cols"));
    spec.sample_rate = static_cast<int>(get_u32(is, "melgrid.sample_rate"));
    spec.config.window_len = static_cast<int>(get_u32(is, "melgrid.window_len"));
    spec.config.hop_len = static_cast<int>(get_u32(is, "melgrid.hop_len"));
    spec.config.n_mels = static_cast<int>(get_u32(is, "melgrid.n_mels"));
    spec.config.fmin = get_f64(is, "melgrid.fmin");
    spec.config.fmax = get_f64(is, "melgrid.fmax");
    spec.config.log_floor = get_f64(is, "melgrid.log_floor");
    spec.bin_edges_hz.resize(rows);
    for (auto& [lo, hi] : spec.bin_edges_hz) {
        lo = get_f64(is, "melgrid.edge_lo");
        hi = get_f64(is, "melgrid.edge_hi");
    }
    spec.values = Grid(rows, cols);
    for (float& x : spec.values.v) x = get_f32(is, "melgrid.values");
    return spec;
}

// Grayscale dump for eyeballing spectrograms; row 0 at the bottom.
inline void write_pgm(const std::string& path, const MelSpectrogram& spec) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("pgm: cannot create file: " + path);
    float lo = spec.values.v.empty() ? 0.0f : spec.values.v[0];
    float hi = lo;
    for (float x : spec.values.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const float span = (hi > lo) ? hi - lo : 1.0f;
    os << "P5\n" << spec.values.cols << " " << spec.values.rows << "\n255\n";
    for (int r = spec.values.rows - 1; r >= 0; --r) {
        for (int c = 0; c < spec.values.cols; ++c) {
            const int g = static_cast<int>(255.0f * (spec.values.at(r, c) - lo) / span);
            os.put(static_cast<char>(std::clamp(g, 0, 255)));
        }
    }
}

}  // namespace lungsound
