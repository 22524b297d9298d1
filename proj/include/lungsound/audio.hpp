#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "lungsound/bytes.hpp"
#include "lungsound/error.hpp"

namespace lungsound {

// Mono waveform; the unit flowing through the preprocessing chain.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

namespace wav_detail {

struct FmtChunk {
    std::uint16_t audio_format = 0;
    std::uint16_t num_channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits_per_sample = 0;
};

}  // namespace wav_detail

// Reads a RIFF/WAVE file holding PCM 16-bit or IEEE-float 32-bit samples.
// Multi-channel audio is averaged down to mono; values are scaled to [-1, 1].
inline AudioClip read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("wav: cannot open file: " + path);

    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "RIFF")
        throw DataError("wav: bad riff.magic in " + path);
    (void)get_u32(is, "riff.size");
    if (!is.read(magic, 4) || std::string(magic, 4) != "WAVE")
        throw DataError("wav: bad riff.format in " + path);

    wav_detail::FmtChunk fmt;
    bool have_fmt = false;
    std::vector<char> data;
    bool have_data = false;

    while (is.read(magic, 4)) {
        std::uint32_t size = get_u32(is, "chunk.size");
        std::string id(magic, 4);
        if (id == "fmt ") {
            if (size < 16) throw DataError("wav: fmt.size too small in " + path);
            fmt.audio_format = get_u16(is, "fmt.audio_format");
            fmt.num_channels = get_u16(is, "fmt.num_channels");
            fmt.sample_rate = get_u32(is, "fmt.sample_rate");
            (void)get_u32(is, "fmt.byte_rate");
            (void)get_u16(is, "fmt.block_align");
            fmt.bits_per_sample = get_u16(is, "fmt.bits_per_sample");
            is.ignore(size - 16);
            have_fmt = true;
        } else if (id == "data") {
            data.resize(size);
            if (!is.read(data.data(), size)) throw DataError("wav: truncated data chunk in " + path);
            have_data = true;
        } else {
            is.ignore(size);
        }
        if (size % 2 == 1) is.ignore(1);  // chunks are word-aligned
    }

    if (!have_fmt) throw DataError("wav: missing fmt chunk in " + path);
    if (!have_data) throw DataError("wav: missing data chunk in " + path);
    if (fmt.num_channels == 0) throw DataError("wav: fmt.num_channels is zero in " + path);
    if (fmt.sample_rate == 0) throw DataError("wav: fmt.sample_rate is zero in " + path);

    const int ch = fmt.num_channels;
    std::vector<double> mono;

    if (fmt.audio_format == 1 && fmt.bits_per_sample == 16) {
        const std::size_t n_values = data.size() / 2;
        const std::size_t n_frames = n_values / ch;
        mono.resize(n_frames);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
        for (std::size_t f = 0; f < n_frames; ++f) {
            double acc = 0.0;
            for (int c = 0; c < ch; ++c) {
                const std::size_t i = 2 * (f * ch + c);
                const std::int16_t s = static_cast<std::int16_t>(p[i] | (p[i + 1] << 8));
                acc += s / 32768.0;
            }
            mono[f] = acc / ch;
        }
    } else if (fmt.audio_format == 3 && fmt.bits_per_sample == 32) {
        const std::size_t n_values = data.size() / 4;
        const std::size_t n_frames = n_values / ch;
        mono.resize(n_frames);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
        for (std::size_t f = 0; f < n_frames; ++f) {
            double acc = 0.0;
            for (int c = 0; c < ch; ++c) {
                const std::size_t i = 4 * (f * ch + c);
                std::uint32_t u = 0;
                for (int b = 3; b >= 0; --b) u = (u << 8) | p[i + b];
                float v;
                std::memcpy(&v, &u, 4);
                acc += v;
            }
            mono[f] = acc / ch;
        }
    } else {
        throw DataError("wav: unsupported codec (fmt.audio_format=" +
                        std::to_string(fmt.audio_format) + ", fmt.bits_per_sample=" +
                        std::to_string(fmt.bits_per_sample) + ") in " + path);
    }

    if (mono.empty()) throw DataError("wav: empty data chunk in " + path);
    return AudioClip{std::move(mono), static_cast<int>(fmt.sample_rate)};
}

// Writes mono PCM 16-bit at the clip's sample rate. Values are quantized by
// round(x * 32768) clamped to int16, so k/32768 inputs round-trip bit-exactly.
inline void write_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate <= 0) throw ConfigError("wav write: sample_rate must be positive");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("wav: cannot create file: " + path);

    const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
    os.write("RIFF", 4);
    put_u32(os, 36 + data_size);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 1);  // PCM
    put_u16(os, 1);  // mono
    put_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
    put_u32(os, static_cast<std::uint32_t>(clip.sample_rate * 2));
    put_u16(os, 2);
    put_u16(os, 16);
    os.write("data", 4);
    put_u32(os, data_size);
    for (double x : clip.samples) {
        long v = std::lround(x * 32768.0);
        v = std::clamp(v, -32768l, 32767l);
        put_i16(os, static_cast<std::int16_t>(v));
    }
    if (!os) throw DataError("wav: write failed: " + path);
}

namespace resample_detail {

// 4-term Blackman-Harris; ~92 dB sidelobes.
inline double window(double x) {
    if (x <= -1.0 || x >= 1.0) return 0.0;
    return 0.35875 + 0.48829 * std::cos(M_PI * x) + 0.14128 * std::cos(2.0 * M_PI * x) +
           0.01168 * std::cos(3.0 * M_PI * x);
}

inline double sinc(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    const double px = M_PI * x;
    return std::sin(px) / px;
}

}  // namespace resample_detail

// Windowed-sinc rate conversion with anti-alias filtering on downsampling.
// `ratio` = output samples per input sample; sample_rate is left unchanged.
inline std::vector<double> resample_by_ratio(const std::vector<double>& in, double ratio) {
    if (ratio <= 0.0) throw ConfigError("resample: ratio must be positive");
    const std::int64_t n_in = static_cast<std::int64_t>(in.size());
    const std::int64_t n_out = std::llround(n_in * ratio);
    std::vector<double> out(static_cast<std::size_t>(std::max<std::int64_t>(n_out, 0)));
    if (n_in == 0 || n_out <= 0) return out;

    const double rolloff = 0.945;
    const double fc = 0.5 * std::min(1.0, ratio) * rolloff;  // cycles per input sample
    const int zero_crossings = 24;
    const double half_width = zero_crossings / (2.0 * fc);

    for (std::int64_t m = 0; m < n_out; ++m) {
        const double t = m / ratio;
        const std::int64_t k_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(t - half_width)));
        const std::int64_t k_hi = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::floor(t + half_width)));
        double acc = 0.0;
        for (std::int64_t k = k_lo; k <= k_hi; ++k) {
            const double tau = t - k;
            acc += in[k] * 2.0 * fc * resample_detail::sinc(2.0 * fc * tau) *
                   resample_detail::window(tau / half_width);
        }
        out[m] = acc;
    }
    return out;
}

inline AudioClip resample(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0) throw ConfigError("resample: target_rate must be positive");
    if (clip.sample_rate <= 0) throw ConfigError("resample: clip sample_rate must be positive");
    if (target_rate == clip.sample_rate) return clip;
    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    return AudioClip{resample_by_ratio(clip.samples, ratio), target_rate};
}

// Peak normalization into [-1, 1]; all-zero clips pass through unchanged.
inline AudioClip normalize(const AudioClip& clip) {
    double peak = 0.0;
    for (double x : clip.samples) peak = std::max(peak, std::fabs(x));
    if (peak == 0.0) return clip;
    AudioClip out{clip.samples, clip.sample_rate};
    for (double& x : out.samples) x /= peak;
    return out;
}

}  // namespace lungsound
