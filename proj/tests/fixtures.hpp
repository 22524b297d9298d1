#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lungsound/audio.hpp"
#include "lungsound/dataset.hpp"
#include "lungsound/rng.hpp"

namespace fixtures {

inline lungsound::AudioClip tone(double freq_hz, double duration_s, int rate, double amp = 0.5,
                                 double phase = 0.0) {
    lungsound::AudioClip clip;
    clip.sample_rate = rate;
    const std::int64_t n = std::llround(duration_s * rate);
    clip.samples.resize(n);
    for (std::int64_t i = 0; i < n; ++i)
        clip.samples[i] = amp * std::sin(2.0 * M_PI * freq_hz * i / rate + phase);
    return clip;
}

inline lungsound::AudioClip noise(double duration_s, int rate, double amp, std::uint64_t seed) {
    lungsound::AudioClip clip;
    clip.sample_rate = rate;
    lungsound::Rng rng(seed);
    clip.samples.resize(std::llround(duration_s * rate));
    for (double& x : clip.samples) x = amp * rng.normal();
    return clip;
}

inline lungsound::BreathingCycle cycle_of(std::vector<double> samples, lungsound::ClassLabel label,
                                          std::int64_t uid, int rate = 4000) {
    lungsound::BreathingCycle c;
    c.samples.samples = std::move(samples);
    c.samples.sample_rate = rate;
    c.label = label;
    c.uid = uid;
    return c;
}

inline std::vector<double> ramp(std::int64_t n, double base) {
    std::vector<double> v(n);
    for (std::int64_t i = 0; i < n; ++i) v[i] = base + 1e-4 * i;
    return v;
}

// Unique scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
    const std::string dir = "test-scratch/" + name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
