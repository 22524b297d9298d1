#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lungsound/audio.hpp"
#include "lungsound/dataset.hpp"
#include "lungsound/error.hpp"
#include "lungsound/rng.hpp"

namespace lungsound {

struct PatientSpec {
    int patient_id = 0;
    Device device = Device::AKGC417L;
    int n_cycles = 0;
};

// Desk-scale surrogate for the real corpus. Wheeze cycles carry a sustained
// tone, crackle cycles short broadband clicks, "both" cycles both; every
// device imposes a fixed coloration. Litt3200 is synthesized with no energy
// above ~1.4 kHz so its spectrograms show the blank high band.
struct SynthSpec {
    std::vector<PatientSpec> patients;
    std::array<double, kNumClasses> class_mix = {0.45, 0.25, 0.18, 0.12};
    int sample_rate = 4000;
    double min_cycle_s = 1.2;
    double max_cycle_s = 4.0;
    double wheeze_hz = 400.0;
    double wheeze_amp = 0.35;
    double crackle_amp = 0.55;
    double noise_amp = 0.06;
    double fade_s = 0.25;

    void validate() const {
        if (patients.empty()) throw ConfigError("synth: no patients");
        for (const PatientSpec& p : patients)
            if (p.n_cycles < 1) throw ConfigError("synth: patient cycle count must be >= 1");
        double mix = 0.0;
        for (double m : class_mix) {
            if (m < 0.0) throw ConfigError("synth: class mix must be nonnegative");
            mix += m;
        }
        if (mix <= 0.0) throw ConfigError("synth: class mix sums to zero");
        if (!(0.0 < min_cycle_s && min_cycle_s <= max_cycle_s))
            throw ConfigError("synth: bad cycle length range");
        if (sample_rate <= 0) throw ConfigError("synth: sample_rate must be positive");
    }
};

inline SynthSpec uniform_synth_spec(int n_patients, int cycles_per_patient) {
    SynthSpec spec;
    for (int i = 0; i < n_patients; ++i)
        spec.patients.push_back(PatientSpec{
            101 + i, kAllDevices[static_cast<std::size_t>(i) % kNumDevices], cycles_per_patient});
    return spec;
}

namespace synth_detail {

struct Coloration {
    double gain;
    double noise_scale;
    double wheeze_scale;
    double crackle_scale;
    double tilt;        // >0 damps highs, <0 damps lows
    bool band_limited;  // no content above ~1.4 kHz
};

inline Coloration coloration(Device device) {
    switch (device) {
        case Device::AKGC417L: return {1.00, 1.0, 1.00, 1.00, 0.0, false};
        case Device::Meditron: return {0.85, 0.8, 0.75, 1.10, 0.7, false};
        case Device::Litt3200: return {1.10, 1.3, 0.85, 0.90, 0.3, true};
        case Device::LittC2SE: return {0.90, 1.1, 1.15, 0.65, -0.7, false};
    }
    return {1.0, 1.0, 1.0, 1.0, 0.0, false};
}

// Fade built as the integral of a Hann^2 bump: four continuous derivatives
// at both joins, so the envelope spreads spectral lines far less than the
// analysis log floor.
inline double smooth_fade(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double u = 2.0 * M_PI * x;
    return (3.0 * M_PI * x - 2.0 * std::sin(u) + 0.25 * std::sin(2.0 * u)) / (3.0 * M_PI);
}

inline double edge_envelope(std::int64_t i, std::int64_t n, std::int64_t fade) {
    const double in = fade > 0 ? smooth_fade(static_cast<double>(i) / fade) : 1.0;
    const double out = fade > 0 ? smooth_fade(static_cast<double>(n - 1 - i) / fade) : 1.0;
    return std::min(in, out);
}

// Adds a steady sinusoid via phase recurrence.
inline void add_tone(std::vector<double>& x, double freq_hz, int rate, double amp, double phase,
                     std::int64_t begin, std::int64_t end, std::int64_t fade) {
    const double w = 2.0 * M_PI * freq_hz / rate;
    const double c = 2.0 * std::cos(w);
    double s_prev = std::sin(phase - w);
    double s_cur = std::sin(phase);
    const std::int64_t span = end - begin;
    for (std::int64_t i = begin; i < end; ++i) {
        x[i] += amp * edge_envelope(i - begin, span, fade) * s_cur;
        const double s_next = c * s_cur - s_prev;
        s_prev = s_cur;
        s_cur = s_next;
    }
}

// Breath noise for band-limited devices: random-phase lines on the 15.625 Hz
// grid of the default 256-sample analysis window, kept under the device
// low-pass passband edge.
inline void add_line_noise(std::vector<double>& x, int rate, double amp, double max_hz, Rng& rng) {
    const double spacing = rate / 256.0;
    const int k_lo = 2;
    const int k_hi = static_cast<int>(max_hz / spacing);
    const int n_lines = std::max(1, k_hi - k_lo + 1);
    const double line_amp = amp * std::sqrt(2.0 / n_lines);
    for (int k = k_lo; k <= k_hi; ++k) {
        const double f = k * spacing;
        const double rolloff = 1.0 / (1.0 + f / 350.0);  // pink-ish breath spectrum
        add_tone(x, f, rate, line_amp * rolloff, rng.uniform(0.0, 2.0 * M_PI), 0,
                 static_cast<std::int64_t>(x.size()), 0);
    }
}

inline void add_white_noise(std::vector<double>& x, double amp, double tilt, Rng& rng) {
    double prev = 0.0;
    const double norm = 1.0 + std::fabs(tilt);
    for (double& v : x) {
        const double n = rng.normal();
        v += amp * (n + tilt * prev) / norm;
        prev = n;
    }
}

inline void add_crackles(std::vector<double>& x, int rate, double amp, bool band_limited,
                         Rng& rng) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    const double duration_s = static_cast<double>(n) / rate;
    const int n_clicks = std::max(4, static_cast<int>(duration_s * rng.uniform(5.0, 8.0)));
    for (int c = 0; c < n_clicks; ++c) {
        const double center = rng.uniform(0.15, 0.85) * n;
        // 5-15 ms events; the band-limited device keeps carriers low and wide
        const double sigma_s = band_limited ? rng.uniform(0.0015, 0.0025) : rng.uniform(0.001, 0.0025);
        const double fc = band_limited ? rng.uniform(250.0, 450.0) : rng.uniform(300.0, 700.0);
        const double a = amp * rng.uniform(0.7, 1.1);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double sigma = sigma_s * rate;
        const std::int64_t lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(center - 5 * sigma));
        const std::int64_t hi = std::min<std::int64_t>(n, static_cast<std::int64_t>(center + 5 * sigma));
        const double w = 2.0 * M_PI * fc / rate;
        for (std::int64_t i = lo; i < hi; ++i) {
            const double t = (i - center) / sigma;
            x[i] += a * std::exp(-0.5 * t * t) * std::sin(w * (i - center) + phase);
        }
    }
}

inline double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (x / (2.0 * k)) * (x / (2.0 * k));
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

// The band-limited device's output stage: a linear-phase Kaiser FIR low-pass
// with a ~150 dB stopband from ~1.43 kHz up. Applied after all envelopes, so
// the 1500-2000 Hz band sits below the analysis log floor.
inline void device_lowpass(std::vector<double>& x, int rate) {
    const double fc = 1280.0 / rate;     // passband edge (normalized)
    const double beta = 15.0;
    const int half = 132;
    std::vector<double> h(2 * half + 1);
    const double i0b = bessel_i0(beta);
    double sum = 0.0;
    for (int k = -half; k <= half; ++k) {
        const double t = static_cast<double>(k) / half;
        const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - t * t))) / i0b;
        const double sinc = k == 0 ? 2.0 * fc
                                   : std::sin(2.0 * M_PI * fc * k) / (M_PI * k);
        h[k + half] = sinc * window;
        sum += h[k + half];
    }
    for (double& v : h) v /= sum;

    const std::int64_t n = static_cast<std::int64_t>(x.size());
    std::vector<double> y(n, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const std::int64_t k_lo = std::max<std::int64_t>(-half, -i);
        const std::int64_t k_hi = std::min<std::int64_t>(half, n - 1 - i);
        for (std::int64_t k = k_lo; k <= k_hi; ++k) acc += h[k + half] * x[i + k];
        y[i] = acc;
    }
    x = std::move(y);
}

inline void quantize_to_i16_grid(std::vector<double>& x) {
    for (double& v : x) {
        long q = std::lround(v * 32768.0);
        q = std::clamp(q, -32768l, 32767l);
        v = q / 32768.0;
    }
}

inline std::vector<double> make_cycle_wave(ClassLabel label, Device device, int rate,
                                           const SynthSpec& spec, Rng& rng) {
    const Coloration col = coloration(device);
    const std::int64_t n =
        static_cast<std::int64_t>(rng.uniform(spec.min_cycle_s, spec.max_cycle_s) * rate);
    std::vector<double> x(n, 0.0);

    if (col.band_limited)
        add_line_noise(x, rate, spec.noise_amp * col.noise_scale, 1000.0, rng);
    else
        add_white_noise(x, spec.noise_amp * col.noise_scale, col.tilt, rng);

    // slow breathing-depth dip so the spectrogram has quiet frames
    {
        const double mu = rng.uniform(0.3, 0.7) * n;
        const double depth = rng.uniform(0.25, 0.4);
        const double width = 0.2 * n;
        for (std::int64_t i = 0; i < n; ++i) {
            const double t = (i - mu) / width;
            x[i] *= 1.0 - depth * std::exp(-0.5 * t * t);
        }
    }

    if (label == ClassLabel::Wheeze || label == ClassLabel::Both) {
        const std::int64_t begin = static_cast<std::int64_t>(rng.uniform(0.05, 0.15) * n);
        const std::int64_t end = n - static_cast<std::int64_t>(rng.uniform(0.05, 0.15) * n);
        add_tone(x, spec.wheeze_hz, rate, spec.wheeze_amp * col.wheeze_scale,
                 rng.uniform(0.0, 2.0 * M_PI), begin, end,
                 static_cast<std::int64_t>(0.2 * rate));
    }
    if (label == ClassLabel::Crackle || label == ClassLabel::Both) {
        add_crackles(x, rate, spec.crackle_amp * col.crackle_scale, col.band_limited, rng);
    }

    const std::int64_t fade = static_cast<std::int64_t>(spec.fade_s * rate);
    for (std::int64_t i = 0; i < n; ++i) x[i] *= col.gain * edge_envelope(i, n, fade);
    if (col.band_limited) device_lowpass(x, rate);
    return x;
}

// Largest-remainder apportionment of the class mix over n cycles,
// interleaved so every patient sees their classes spread in time.
inline std::vector<ClassLabel> label_sequence(int n, const std::array<double, kNumClasses>& mix) {
    double total = 0.0;
    for (double m : mix) total += m;
    std::array<int, kNumClasses> assigned{};
    std::vector<ClassLabel> out;
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_deficit = -1e300;
        for (int c = 0; c < kNumClasses; ++c) {
            if (mix[c] <= 0.0) continue;
            const double quota = mix[c] / total * (i + 1);
            const double deficit = quota - assigned[c];
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = c;
            }
        }
        ++assigned[best];
        out.push_back(static_cast<ClassLabel>(best));
    }
    return out;
}

inline const char* location_token(int i) {
    static const char* kLocations[] = {"Al", "Ar", "Pl", "Pr", "Tc", "Ll", "Lr"};
    return kLocations[i % 7];
}

}  // namespace synth_detail

// In-memory fixture: one recording per patient, cycles back to back.
// Deterministic in (spec, seed); uids are sequential in patient order.
// Cycles are kept unquantized so the band-limited device has exactly zero
// energy above its cutoff; writing to WAV quantizes to the int16 grid.
inline std::vector<BreathingCycle> synth_cycles(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::vector<PatientSpec> patients = spec.patients;
    std::sort(patients.begin(), patients.end(),
              [](const PatientSpec& a, const PatientSpec& b) { return a.patient_id < b.patient_id; });

    std::vector<BreathingCycle> cycles;
    std::int64_t uid = 0;
    int patient_no = 0;
    for (const PatientSpec& p : patients) {
        const std::vector<ClassLabel> labels = synth_detail::label_sequence(p.n_cycles, spec.class_mix);
        RecordingMeta meta;
        meta.patient_id = p.patient_id;
        meta.recording_index = "1b1";
        meta.chest_location = synth_detail::location_token(patient_no);
        meta.acquisition_mode = "sc";
        meta.device = p.device;

        double t = 0.0;
        for (int c = 0; c < p.n_cycles; ++c) {
            Rng rng(mix64(mix64(seed, static_cast<std::uint64_t>(p.patient_id)),
                          static_cast<std::uint64_t>(c)));
            BreathingCycle cycle;
            cycle.samples.sample_rate = spec.sample_rate;
            cycle.samples.samples =
                synth_detail::make_cycle_wave(labels[c], p.device, spec.sample_rate, spec, rng);
            cycle.label = labels[c];
            cycle.meta = meta;
            cycle.cycle_index = c;
            cycle.uid = uid++;
            cycle.start_s = t;
            t += cycle.samples.duration_s();
            cycle.end_s = t;
            cycles.push_back(std::move(cycle));
        }
        ++patient_no;
    }
    return cycles;
}

// Disk fixture: per-patient wav + annotation files plus a manifest.tsv.
inline DatasetManifest synth_fixture(const SynthSpec& spec, std::uint64_t seed,
                                     const std::string& out_dir) {
    const std::vector<BreathingCycle> cycles = synth_cycles(spec, seed);
    std::filesystem::create_directories(out_dir);

    DatasetManifest manifest;
    std::size_t i = 0;
    while (i < cycles.size()) {
        const RecordingMeta& meta = cycles[i].meta;
        AudioClip recording;
        recording.sample_rate = spec.sample_rate;
        std::ostringstream ann;
        ann.setf(std::ios::fixed);
        ann.precision(6);
        std::size_t j = i;
        for (; j < cycles.size() && cycles[j].meta == meta; ++j) {
            recording.samples.insert(recording.samples.end(), cycles[j].samples.samples.begin(),
                                     cycles[j].samples.samples.end());
            ann << cycles[j].start_s << '\t' << cycles[j].end_s << '\t'
                << (cycles[j].label == ClassLabel::Crackle || cycles[j].label == ClassLabel::Both
                        ? 1 : 0)
                << '\t'
                << (cycles[j].label == ClassLabel::Wheeze || cycles[j].label == ClassLabel::Both
                        ? 1 : 0)
                << '\n';
        }

        const std::string stem = std::to_string(meta.patient_id) + "_" + meta.recording_index +
                                 "_" + meta.chest_location + "_" + meta.acquisition_mode + "_" +
                                 to_string(meta.device);
        const std::string wav_path = out_dir + "/" + stem + ".wav";
        const std::string ann_path = out_dir + "/" + stem + ".txt";
        synth_detail::quantize_to_i16_grid(recording.samples);
        write_wav(wav_path, recording);
        std::ofstream os(ann_path);
        os << ann.str();
        if (!os) throw DataError("synth: cannot write " + ann_path);

        manifest.entries.push_back(ManifestEntry{wav_path, ann_path, meta});
        i = j;
    }
    save_manifest(out_dir + "/manifest.tsv", manifest);
    return manifest;
}

}  // namespace lungsound
