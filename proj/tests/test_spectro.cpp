#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "lungsound/spectrogram.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace lungsound;
using Catch::Approx;

namespace {

const SpectrogramConfig kDefault{};

// bin-centered noise lines (15.625 Hz grid at 4 kHz / 256) up to max_bin,
// with a slow quiet dip so spectrograms have time variance
AudioClip line_noise_clip(int max_bin, double duration_s, std::uint64_t seed) {
    AudioClip clip;
    clip.sample_rate = 4000;
    const std::int64_t n = std::llround(duration_s * 4000);
    clip.samples.assign(n, 0.0);
    Rng rng(seed);
    for (int k = 2; k <= max_bin; ++k) {
        const double f = k * 4000.0 / 256.0;
        const double a = 0.02 * (0.5 + rng.uniform());
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (std::int64_t i = 0; i < n; ++i)
            clip.samples[i] += a * std::sin(2.0 * M_PI * f * i / 4000.0 + phase);
    }
    for (std::int64_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(i) / n - 0.5) / 0.12;
        clip.samples[i] *= 1.0 - 0.6 * std::exp(-0.5 * t * t);
    }
    return clip;
}

std::vector<double> row_means(const MelSpectrogram& spec) {
    std::vector<double> means(spec.values.rows, 0.0);
    for (int r = 0; r < spec.values.rows; ++r) {
        for (int c = 0; c < spec.values.cols; ++c) means[r] += spec.values.at(r, c);
        means[r] /= spec.values.cols;
    }
    return means;
}

double global_min(const MelSpectrogram& spec) {
    return *std::min_element(spec.values.v.begin(), spec.values.v.end());
}

}  // namespace

TEST_CASE("stft of silence is all zero") {
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples.assign(2000, 0.0);
    const Grid mag = stft_magnitude(clip, kDefault);
    for (float v : mag.v) REQUIRE(v == 0.0f);
}

TEST_CASE("stft frame arithmetic") {
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples.assign(4000, 0.0);
    REQUIRE(stft_magnitude(clip, kDefault).cols == 30);

    clip.samples.assign(28000, 0.0);
    REQUIRE(stft_magnitude(clip, kDefault).cols == 218);

    clip.samples.assign(255, 0.0);
    REQUIRE_THROWS_AS(stft_magnitude(clip, kDefault), DataError);
}

TEST_CASE("stft argmax bin of a 500 Hz tone matches the DFT oracle") {
    const AudioClip clip = fixtures::tone(500.0, 1.0, 4000);
    const Grid mag = stft_magnitude(clip, kDefault);
    const int expected_bin = static_cast<int>(std::lround(500.0 * 256.0 / 4000.0));
    REQUIRE(expected_bin == 32);
    for (int f = 0; f < mag.cols; ++f) {
        int best = 0;
        for (int b = 1; b < mag.rows; ++b)
            if (mag.at(b, f) > mag.at(best, f)) best = b;
        REQUIRE(best == expected_bin);
    }
}

TEST_CASE("mel filterbank rows all have positive area") {
    const Grid fb = mel_filterbank(kDefault, 4000);
    REQUIRE(fb.rows == 64);
    REQUIRE(fb.cols == 129);
    for (int m = 0; m < fb.rows; ++m) {
        double sum = 0.0;
        for (int k = 0; k < fb.cols; ++k) sum += fb.at(m, k);
        REQUIRE(sum > 0.0);
    }
}

TEST_CASE("two-filter bank partitions the band symmetrically on the mel axis") {
    SpectrogramConfig config = kDefault;
    config.n_mels = 2;
    config.fmin = 0.0;
    config.fmax = 2000.0;
    std::vector<std::pair<double, double>> edges;
    mel_filterbank(config, 4000, &edges);
    REQUIRE(edges.size() == 2);
    // centers sit at 1/3 and 2/3 of the mel span; symmetric around the middle
    const double c0 = oracle::mel_of_hz(edges[0].second);  // right edge of row 0 = center of row 1
    const double c1 = oracle::mel_of_hz(edges[1].first);   // left edge of row 1 = center of row 0
    const double span = oracle::mel_of_hz(2000.0);
    REQUIRE(c1 == Approx(span / 3.0).margin(1e-9));
    REQUIRE(c0 == Approx(2.0 * span / 3.0).margin(1e-9));
}

TEST_CASE("filter centers reproduce an independently computed mel grid within 0.1 Hz") {
    std::vector<std::pair<double, double>> edges;
    mel_filterbank(kDefault, 4000, &edges);
    const double mel_lo = oracle::mel_of_hz(kDefault.fmin);
    const double mel_hi = oracle::mel_of_hz(kDefault.fmax);
    for (int m = 0; m < kDefault.n_mels; ++m) {
        const double center_mel =
            (oracle::mel_of_hz(edges[m].first) + oracle::mel_of_hz(edges[m].second)) / 2.0;
        const double center_hz = oracle::hz_of_mel(center_mel);
        const double expected =
            oracle::hz_of_mel(mel_lo + (mel_hi - mel_lo) * (m + 1) / (kDefault.n_mels + 1));
        REQUIRE(center_hz == Approx(expected).margin(0.1));
    }
}

TEST_CASE("mel filterbank rejects degenerate bands") {
    SpectrogramConfig config = kDefault;
    config.fmin = 2000.0;
    config.fmax = 2000.0;
    REQUIRE_THROWS_AS(mel_filterbank(config, 4000), ConfigError);
    config.fmin = 50.0;
    config.fmax = 2500.0;
    REQUIRE_THROWS_AS(mel_filterbank(config, 4000), ConfigError);
}

TEST_CASE("mel spectrogram of silence sits at the log floor everywhere") {
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples.assign(28000, 0.0);
    const MelSpectrogram spec = mel_spectrogram(clip, kDefault);
    REQUIRE(spec.values.rows == 64);
    REQUIRE(spec.values.cols == 218);
    const float floor = static_cast<float>(std::log(kDefault.log_floor));
    for (float v : spec.values.v) REQUIRE(v == floor);
}

TEST_CASE("a 440 Hz tone concentrates in the mel row whose band contains it") {
    const AudioClip clip = fixtures::tone(440.0, 1.0, 4000);
    const MelSpectrogram spec = mel_spectrogram(clip, kDefault);

    // oracle: the filter with the largest weight at the tone's DFT bin
    const Grid fb = mel_filterbank(kDefault, 4000);
    const int tone_bin = static_cast<int>(std::lround(440.0 * 256.0 / 4000.0));
    int expected = 0;
    for (int m = 1; m < fb.rows; ++m)
        if (fb.at(m, tone_bin) > fb.at(expected, tone_bin)) expected = m;

    for (int f = 0; f < spec.values.cols; ++f) {
        int best = 0;
        for (int m = 1; m < spec.values.rows; ++m)
            if (spec.values.at(m, f) > spec.values.at(best, f)) best = m;
        REQUIRE(best == expected);
    }
    REQUIRE(spec.bin_edges_hz[expected].first < 440.0);
    REQUIRE(spec.bin_edges_hz[expected].second > 440.0);
}

TEST_CASE("doubling amplitude raises above-floor cells by log 4") {
    const AudioClip clip = fixtures::tone(500.0, 2.0, 4000, 0.3);
    AudioClip loud = clip;
    for (double& x : loud.samples) x *= 2.0;
    const MelSpectrogram a = mel_spectrogram(clip, kDefault);
    const MelSpectrogram b = mel_spectrogram(loud, kDefault);
    const float floor = static_cast<float>(std::log(kDefault.log_floor));
    int checked = 0;
    for (std::size_t i = 0; i < a.values.v.size(); ++i) {
        // stay clear of the floor clamp in either grid
        if (a.values.v[i] > floor + 3.0f && b.values.v[i] > floor + 3.0f) {
            REQUIRE(b.values.v[i] - a.values.v[i] == Approx(std::log(4.0)).margin(1e-5));
            ++checked;
        }
    }
    REQUIRE(checked > 100);
}

TEST_CASE("total linear mel energy of a tone scales quadratically with amplitude") {
    auto energy = [](double amp) {
        const AudioClip clip = fixtures::tone(450.0, 2.0, 4000, amp);
        const MelSpectrogram spec = mel_spectrogram(clip, kDefault);
        double total = 0.0;
        for (float v : spec.values.v) total += std::exp(static_cast<double>(v));
        return total;
    };
    const double e1 = energy(0.1);
    const double e2 = energy(0.2);
    const double e4 = energy(0.4);
    REQUIRE(e2 / e1 == Approx(4.0).epsilon(0.01));
    REQUIRE(e4 / e2 == Approx(4.0).epsilon(0.01));
}

TEST_CASE("time reversal reverses frame order on window-aligned clips") {
    const int n = 256 + 128 * 20;
    AudioClip clip = fixtures::noise(0.0, 4000, 0.0, 0);
    clip.samples.resize(n);
    Rng rng(17);
    for (double& x : clip.samples) x = rng.normal() * 0.2;
    AudioClip reversed = clip;
    std::reverse(reversed.samples.begin(), reversed.samples.end());

    const MelSpectrogram a = mel_spectrogram(clip, kDefault);
    const MelSpectrogram b = mel_spectrogram(reversed, kDefault);
    REQUIRE(a.values.cols == b.values.cols);
    for (int m = 0; m < a.values.rows; ++m)
        for (int f = 0; f < a.values.cols; ++f)
            REQUIRE(a.values.at(m, f) ==
                    Approx(b.values.at(m, a.values.cols - 1 - f)).margin(0.15));
}

TEST_CASE("blank clip removes exactly the rows parked at the floor") {
    std::vector<std::pair<double, double>> edges;
    mel_filterbank(kDefault, 4000, &edges);
    MelSpectrogram spec;
    spec.config = kDefault;
    spec.sample_rate = 4000;
    spec.bin_edges_hz = edges;
    spec.values = Grid(64, 40);
    const float floor = static_cast<float>(std::log(kDefault.log_floor));
    Rng rng(3);
    for (int m = 0; m < 64; ++m)
        for (int f = 0; f < 40; ++f)
            spec.values.at(m, f) =
                m < 54 ? floor + 8.0f + static_cast<float>(rng.uniform(0.0, 4.0)) : floor;

    const MelSpectrogram clipped = blank_region_clip(spec, BlankClipConfig{});
    REQUIRE(clipped.values.rows == 54);
    REQUIRE(clipped.bin_edges_hz.size() == 54);
    // protected rows are never removed even in a fully blank grid
    MelSpectrogram blank = spec;
    std::fill(blank.values.v.begin(), blank.values.v.end(), floor);
    const MelSpectrogram kept = blank_region_clip(blank, BlankClipConfig{});
    REQUIRE(kept.values.rows > 0);
    for (int m = 0; m < kept.values.rows; ++m)
        REQUIRE(kept.bin_edges_hz[m].first <= BlankClipConfig{}.protect_below_hz);
}

TEST_CASE("blank clip is the identity when nothing is blank") {
    const AudioClip clip = fixtures::noise(2.0, 4000, 0.2, 23);
    const MelSpectrogram spec = mel_spectrogram(clip, kDefault);
    const MelSpectrogram out = blank_region_clip(spec, BlankClipConfig{});
    REQUIRE(out.values.rows == spec.values.rows);
    REQUIRE(out.values.v == spec.values.v);
}

TEST_CASE("band-limited noise loses its 1500-2000 Hz rows and nothing below") {
    // content up to bin 94 (1468.75 Hz); windowed leakage reaches bin 95
    // window-aligned length: no zero-padded tail frame
    const AudioClip clip = line_noise_clip(94, 3.008, 77);
    const MelSpectrogram spec = mel_spectrogram(clip, kDefault);
    const BlankClipConfig config{};
    const MelSpectrogram clipped = blank_region_clip(spec, config);
    REQUIRE(clipped.values.rows < spec.values.rows);

    // threshold oracle: recompute the expected run from row means
    const std::vector<double> means = row_means(spec);
    const double threshold = global_min(spec) + config.floor_margin_db * std::log(10.0) / 10.0;
    int expected_keep = spec.values.rows;
    while (expected_keep > 0 && means[expected_keep - 1] <= threshold &&
           spec.bin_edges_hz[expected_keep - 1].first > config.protect_below_hz)
        --expected_keep;
    REQUIRE(clipped.values.rows == expected_keep);

    // every removed row spans only 1500 Hz and above; removed rows exist
    for (int m = expected_keep; m < spec.values.rows; ++m)
        REQUIRE(spec.bin_edges_hz[m].first >= 1500.0);
    // no surviving row that reaches below 1500 Hz was touched
    for (int m = 0; m < clipped.values.rows; ++m)
        REQUIRE(clipped.bin_edges_hz[m] == spec.bin_edges_hz[m]);

    // idempotent on this fixture
    const MelSpectrogram twice = blank_region_clip(clipped, config);
    REQUIRE(twice.values.rows == clipped.values.rows);
    REQUIRE(twice.values.v == clipped.values.v);
}

TEST_CASE("removed rows are never louder than retained unprotected rows") {
    const BlankClipConfig config{};
    const double margin = config.floor_margin_db * std::log(10.0) / 10.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const AudioClip clip = line_noise_clip(90, 2.016, seed);
        const MelSpectrogram spec = mel_spectrogram(clip, kDefault);
        const MelSpectrogram clipped = blank_region_clip(spec, config);
        const std::vector<double> means = row_means(spec);
        double removed_max = -1e30;
        for (int m = clipped.values.rows; m < spec.values.rows; ++m)
            removed_max = std::max(removed_max, means[m]);
        for (int m = 0; m < clipped.values.rows; ++m) {
            if (spec.bin_edges_hz[m].first <= config.protect_below_hz) continue;
            REQUIRE(removed_max <= means[m] + margin);
        }
    }
}

TEST_CASE("mel grid file round-trips") {
    const std::string dir = fixtures::scratch_dir("melgrid");
    const AudioClip clip = fixtures::tone(300.0, 1.0, 4000, 0.4);
    const MelSpectrogram spec = mel_spectrogram(clip, kDefault);
    write_melgrid(dir + "/g.melgrid", spec);
    const MelSpectrogram back = read_melgrid(dir + "/g.melgrid");
    REQUIRE(back.values.rows == spec.values.rows);
    REQUIRE(back.values.cols == spec.values.cols);
    REQUIRE(back.values.v == spec.values.v);
    REQUIRE(back.bin_edges_hz == spec.bin_edges_hz);
    REQUIRE(back.config == spec.config);
    REQUIRE(back.sample_rate == spec.sample_rate);

    write_pgm(dir + "/g.pgm", spec);
    REQUIRE(std::filesystem::file_size(dir + "/g.pgm") > 0);
}
