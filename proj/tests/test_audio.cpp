#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <fstream>

#include "lungsound/audio.hpp"
#include "lungsound/bytes.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace lungsound;
using Catch::Approx;

namespace {

// hand-rolled wav writer so read_wav is checked against an independent encoder
void write_test_wav(const std::string& path, const std::vector<std::vector<std::int16_t>>& channels,
                    int rate) {
    std::ofstream os(path, std::ios::binary);
    const int ch = static_cast<int>(channels.size());
    const std::uint32_t frames = static_cast<std::uint32_t>(channels[0].size());
    const std::uint32_t data_size = frames * ch * 2;
    os.write("RIFF", 4);
    put_u32(os, 36 + data_size);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 1);
    put_u16(os, static_cast<std::uint16_t>(ch));
    put_u32(os, static_cast<std::uint32_t>(rate));
    put_u32(os, static_cast<std::uint32_t>(rate * ch * 2));
    put_u16(os, static_cast<std::uint16_t>(ch * 2));
    put_u16(os, 16);
    os.write("data", 4);
    put_u32(os, data_size);
    for (std::uint32_t f = 0; f < frames; ++f)
        for (int c = 0; c < ch; ++c) put_i16(os, channels[c][f]);
}

void write_float_wav(const std::string& path, const std::vector<float>& mono, int rate) {
    std::ofstream os(path, std::ios::binary);
    const std::uint32_t data_size = static_cast<std::uint32_t>(mono.size() * 4);
    os.write("RIFF", 4);
    put_u32(os, 36 + data_size);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 3);  // IEEE float
    put_u16(os, 1);
    put_u32(os, static_cast<std::uint32_t>(rate));
    put_u32(os, static_cast<std::uint32_t>(rate * 4));
    put_u16(os, 4);
    put_u16(os, 32);
    os.write("data", 4);
    put_u32(os, data_size);
    for (float x : mono) put_f32(os, x);
}

}  // namespace

TEST_CASE("read_wav scales 16-bit PCM to full scale") {
    const std::string dir = fixtures::scratch_dir("wav-read");
    write_test_wav(dir + "/const.wav", {std::vector<std::int16_t>(4000, 16384)}, 4000);
    const AudioClip clip = read_wav(dir + "/const.wav");
    REQUIRE(clip.sample_rate == 4000);
    REQUIRE(clip.samples.size() == 4000);
    for (double x : clip.samples) REQUIRE(x == 0.5);
}

TEST_CASE("read_wav averages stereo to mono") {
    const std::string dir = fixtures::scratch_dir("wav-stereo");
    std::vector<std::int16_t> left(100), right(100);
    for (int i = 0; i < 100; ++i) {
        left[i] = static_cast<std::int16_t>(100 * i - 5000);
        right[i] = static_cast<std::int16_t>(-left[i]);
    }
    write_test_wav(dir + "/stereo.wav", {left, right}, 8000);
    const AudioClip clip = read_wav(dir + "/stereo.wav");
    for (double x : clip.samples) REQUIRE(x == 0.0);
}

TEST_CASE("read_wav handles IEEE float files") {
    const std::string dir = fixtures::scratch_dir("wav-float");
    write_float_wav(dir + "/f.wav", {0.25f, -0.75f, 1.0f}, 44100);
    const AudioClip clip = read_wav(dir + "/f.wav");
    REQUIRE(clip.sample_rate == 44100);
    REQUIRE(clip.samples == std::vector<double>{0.25, -0.75, 1.0});
}

TEST_CASE("wav round-trip through our own writer is bit-identical") {
    const std::string dir = fixtures::scratch_dir("wav-roundtrip");
    AudioClip clip;
    clip.sample_rate = 4000;
    Rng rng(99);
    for (int i = 0; i < 5000; ++i) {
        // quantized to the int16 grid, as the writer emits
        clip.samples.push_back(static_cast<double>(rng.uniform_int(-32768, 32767)) / 32768.0);
    }
    write_wav(dir + "/rt.wav", clip);
    const AudioClip back = read_wav(dir + "/rt.wav");
    REQUIRE(back.sample_rate == clip.sample_rate);
    REQUIRE(back.samples == clip.samples);
}

TEST_CASE("read_wav error cases name the offending field") {
    const std::string dir = fixtures::scratch_dir("wav-errors");
    REQUIRE_THROWS_AS(read_wav(dir + "/missing.wav"), DataError);

    {
        std::ofstream os(dir + "/bad.wav", std::ios::binary);
        os.write("JUNKJUNKJUNK", 12);
    }
    REQUIRE_THROWS_WITH(read_wav(dir + "/bad.wav"), Catch::Matchers::ContainsSubstring("riff.magic"));

    {
        // valid container, unsupported codec (8-bit PCM)
        std::ofstream os(dir + "/codec.wav", std::ios::binary);
        os.write("RIFF", 4);
        put_u32(os, 36 + 4);
        os.write("WAVE", 4);
        os.write("fmt ", 4);
        put_u32(os, 16);
        put_u16(os, 1);
        put_u16(os, 1);
        put_u32(os, 8000);
        put_u32(os, 8000);
        put_u16(os, 1);
        put_u16(os, 8);
        os.write("data", 4);
        put_u32(os, 4);
        put_u32(os, 0);
    }
    REQUIRE_THROWS_WITH(read_wav(dir + "/codec.wav"),
                        Catch::Matchers::ContainsSubstring("unsupported codec"));
}

TEST_CASE("resample halves the length at half the rate") {
    AudioClip clip = fixtures::tone(100.0, 1.0, 8000);
    REQUIRE(clip.samples.size() == 8000);
    const AudioClip out = resample(clip, 4000);
    REQUIRE(out.sample_rate == 4000);
    REQUIRE(out.samples.size() == 4000);
}

TEST_CASE("resample at the same rate returns the clip unchanged") {
    const AudioClip clip = fixtures::tone(250.0, 0.5, 4000);
    const AudioClip out = resample(clip, 4000);
    REQUIRE(out.samples == clip.samples);
}

TEST_CASE("resample keeps a 100 Hz tone at 100 Hz across 44.1k -> 4k") {
    const AudioClip clip = fixtures::tone(100.0, 1.0, 44100);
    const AudioClip out = resample(clip, 4000);
    REQUIRE(out.samples.size() == 4000);
    REQUIRE(oracle::dominant_frequency(out.samples, 4000) == Approx(100.0).margin(0.51));
}

TEST_CASE("resample alias floor is at least 50 dB below a mid-band tone") {
    // 700 Hz < 0.4 * Nyquist(2000); downsample 44.1k -> 4k
    const AudioClip clip = fixtures::tone(700.0, 2.0, 44100);
    const AudioClip out = resample(clip, 4000);
    const std::vector<double> mags = oracle::windowed_spectrum(out.samples);
    const int n = static_cast<int>(out.samples.size());
    const int tone_bin = static_cast<int>(std::llround(700.0 * n / 4000.0));
    double peak = 0.0, worst = 0.0;
    for (int k = 2; k < static_cast<int>(mags.size()); ++k) {
        if (std::abs(k - tone_bin) <= 6)
            peak = std::max(peak, mags[k]);
        else
            worst = std::max(worst, mags[k]);
    }
    REQUIRE(20.0 * std::log10(peak / worst) >= 50.0);
}

TEST_CASE("resample round-trip preserves the dominant bin exactly") {
    const AudioClip clip = fixtures::tone(500.0, 1.0, 4000);
    const AudioClip back = resample(resample(clip, 8000), 4000);
    REQUIRE(back.samples.size() == clip.samples.size());
    REQUIRE(oracle::dominant_frequency(back.samples, 4000) ==
            oracle::dominant_frequency(clip.samples, 4000));
}

TEST_CASE("resample preserves duration within one output sample") {
    for (int n : {1000, 4411, 30000}) {
        AudioClip clip;
        clip.sample_rate = 44100;
        clip.samples.assign(n, 0.1);
        const AudioClip out = resample(clip, 4000);
        const double expected = static_cast<double>(n) * 4000.0 / 44100.0;
        REQUIRE(std::abs(static_cast<double>(out.samples.size()) - expected) <= 1.0);
    }
}

TEST_CASE("normalize scales the peak to one") {
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples = {0.5, -0.25};
    const AudioClip out = normalize(clip);
    REQUIRE(out.samples == std::vector<double>{1.0, -0.5});
}

TEST_CASE("normalize leaves silence untouched") {
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples.assign(64, 0.0);
    REQUIRE(normalize(clip).samples == clip.samples);
}

TEST_CASE("normalize peak is exactly one and the map is idempotent") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        AudioClip clip = fixtures::noise(0.1, 4000, rng.uniform(0.01, 3.0), rng.next_u64());
        const AudioClip once = normalize(clip);
        double peak = 0.0;
        for (double x : once.samples) peak = std::max(peak, std::fabs(x));
        REQUIRE(peak == 1.0);
        REQUIRE(normalize(once).samples == once.samples);
    }
}
