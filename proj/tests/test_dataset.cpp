#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "lungsound/dataset.hpp"
#include "lungsound/spectrogram.hpp"
#include "lungsound/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace lungsound;
using Catch::Approx;

TEST_CASE("recording filenames parse positionally") {
    const RecordingMeta m = parse_recording_filename("101_1b1_Al_sc_Meditron.wav");
    REQUIRE(m.patient_id == 101);
    REQUIRE(m.recording_index == "1b1");
    REQUIRE(m.chest_location == "Al");
    REQUIRE(m.acquisition_mode == "sc");
    REQUIRE(m.device == Device::Meditron);

    REQUIRE(parse_recording_filename("226_1b1_Pl_sc_LittC2SE.wav").device == Device::LittC2SE);
    REQUIRE(parse_recording_filename("/tmp/data/160_2b2_Tc_mc_AKGC417L.wav").patient_id == 160);
}

TEST_CASE("recording filename validation") {
    REQUIRE_THROWS_AS(parse_recording_filename("101_1b1_Al_sc_Unknown.wav"), DataError);
    REQUIRE_THROWS_AS(parse_recording_filename("101_1b1_Al_Meditron.wav"), DataError);
    REQUIRE_THROWS_AS(parse_recording_filename("101_1b1_Al_sc_extra_Meditron.wav"), DataError);
    REQUIRE_THROWS_AS(parse_recording_filename("abc_1b1_Al_sc_Meditron.wav"), DataError);
    REQUIRE_THROWS_AS(parse_recording_filename("101_1b1_Al_sc_Meditron.flac"), DataError);
}

TEST_CASE("annotation lines parse in order") {
    const auto anns = parse_annotation_text("0.364\t2.436\t0\t0\n2.436\t4.698\t1\t0\n");
    REQUIRE(anns.size() == 2);
    REQUIRE(anns[0].start_s == 0.364);
    REQUIRE(anns[0].end_s == 2.436);
    REQUIRE_FALSE(anns[0].crackle);
    REQUIRE_FALSE(anns[0].wheeze);
    REQUIRE(anns[1].crackle);

    std::string ten;
    for (int i = 0; i < 10; ++i)
        ten += std::to_string(i) + " " + std::to_string(i + 1) + " 0 1\n";
    const auto parsed = parse_annotation_text(ten);
    REQUIRE(parsed.size() == 10);
    for (int i = 0; i < 10; ++i) REQUIRE(parsed[i].start_s == Approx(i));
}

TEST_CASE("annotation errors carry the line number") {
    REQUIRE_THROWS_WITH(parse_annotation_text("1.0 0.5 0 0\n"),
                        Catch::Matchers::ContainsSubstring("line 1"));
    REQUIRE_THROWS_WITH(parse_annotation_text("0 1 0 0\n0.5 x 0 0\n"),
                        Catch::Matchers::ContainsSubstring("line 2"));
    REQUIRE_THROWS_WITH(parse_annotation_text("0 1 2 0\n"),
                        Catch::Matchers::ContainsSubstring("crackle"));
    REQUIRE_THROWS_WITH(parse_annotation_text("0 1 0 7\n"),
                        Catch::Matchers::ContainsSubstring("wheeze"));
}

TEST_CASE("label_from_flags is the four-class bijection") {
    REQUIRE(label_from_flags(false, false) == ClassLabel::Normal);
    REQUIRE(label_from_flags(true, false) == ClassLabel::Crackle);
    REQUIRE(label_from_flags(false, true) == ClassLabel::Wheeze);
    REQUIRE(label_from_flags(true, true) == ClassLabel::Both);
    std::set<ClassLabel> seen;
    for (bool c : {false, true})
        for (bool w : {false, true}) seen.insert(label_from_flags(c, w));
    REQUIRE(seen.size() == 4);
}

TEST_CASE("extract_cycles cuts annotated spans") {
    AudioClip clip = fixtures::noise(10.0, 4000, 0.1, 1);
    RecordingMeta meta;
    meta.patient_id = 7;
    const std::vector<CycleAnnotation> anns = {
        {0.0, 2.0, false, false}, {2.0, 5.0, true, false}, {5.0, 10.0, false, true}};
    const auto cycles = extract_cycles(clip, anns, meta);
    REQUIRE(cycles.size() == 3);
    REQUIRE(cycles[0].samples.samples.size() == 8000);
    REQUIRE(cycles[1].samples.samples.size() == 12000);
    REQUIRE(cycles[2].samples.samples.size() == 20000);
    REQUIRE(cycles[1].label == ClassLabel::Crackle);
    REQUIRE(cycles[2].cycle_index == 2);

    // sample-exact boundaries vs index arithmetic
    for (const auto& [i, ann] : std::vector<std::pair<int, CycleAnnotation>>{
             {0, anns[0]}, {1, anns[1]}, {2, anns[2]}}) {
        const auto begin = static_cast<std::size_t>(std::llround(ann.start_s * 4000));
        REQUIRE(cycles[i].samples.samples[0] == clip.samples[begin]);
        REQUIRE(cycles[i].samples.samples.back() ==
                clip.samples[std::llround(ann.end_s * 4000) - 1]);
    }

    REQUIRE(extract_cycles(clip, {}, meta).empty());
}

TEST_CASE("extract_cycles clamps small overruns and rejects large ones") {
    AudioClip clip = fixtures::noise(1.0, 4000, 0.1, 2);
    RecordingMeta meta;
    const auto clamped =
        extract_cycles(clip, {{0.5, 1.0 + 100.0 / 4000.0, false, false}}, meta);
    REQUIRE(clamped[0].samples.samples.size() == 2000);

    REQUIRE_THROWS_AS(extract_cycles(clip, {{0.5, 2.0, false, false}}, meta), DataError);
    REQUIRE_THROWS_AS(extract_cycles(clip, {{1.5, 2.0, false, false}}, meta), DataError);
}

TEST_CASE("patient_split honors the ceiling rule") {
    std::set<int> ten;
    for (int i = 0; i < 10; ++i) ten.insert(100 + i);
    const SplitSpec split = patient_split(ten, 0.8, 3);
    REQUIRE(split.train_patients.size() == 8);
    REQUIRE(split.test_patients.size() == 2);

    std::set<int> many;
    for (int i = 0; i < 126; ++i) many.insert(i);
    const SplitSpec big = patient_split(many, 0.8, 3);
    REQUIRE(big.train_patients.size() == 101);
    REQUIRE(big.test_patients.size() == 25);
}

TEST_CASE("patient_split is deterministic and validates input") {
    std::set<int> ids = {1, 2, 3, 4, 5, 6, 7};
    const SplitSpec a = patient_split(ids, 0.7, 42);
    const SplitSpec b = patient_split(ids, 0.7, 42);
    REQUIRE(a.train_patients == b.train_patients);
    REQUIRE(a.test_patients == b.test_patients);

    REQUIRE_THROWS_AS(patient_split(std::set<int>{1}, 0.8, 0), DataError);
    REQUIRE_THROWS_AS(patient_split(ids, 0.0, 0), ConfigError);
    REQUIRE_THROWS_AS(patient_split(ids, 1.0, 0), ConfigError);
}

TEST_CASE("patient_split sides are disjoint and cover everyone for 1000 seeds") {
    std::set<int> ids;
    for (int i = 0; i < 23; ++i) ids.insert(i * 3 + 11);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const SplitSpec split = patient_split(ids, 0.8, seed);
        REQUIRE(split.train_patients.size() + split.test_patients.size() == ids.size());
        for (int p : split.train_patients) REQUIRE(split.test_patients.count(p) == 0);
        for (int p : ids)
            REQUIRE((split.train_patients.count(p) + split.test_patients.count(p)) == 1);
    }
}

TEST_CASE("device_subsets partitions cycles") {
    SynthSpec spec;
    spec.patients = {{101, Device::AKGC417L, 4},
                     {102, Device::Meditron, 3},
                     {103, Device::Litt3200, 2}};
    const auto cycles = synth_cycles(spec, 5);
    const auto subsets = device_subsets(cycles);
    REQUIRE(subsets.size() == 4);
    REQUIRE(subsets.at(Device::AKGC417L).size() == 4);
    REQUIRE(subsets.at(Device::Meditron).size() == 3);
    REQUIRE(subsets.at(Device::Litt3200).size() == 2);
    REQUIRE(subsets.at(Device::LittC2SE).empty());
    std::size_t total = 0;
    for (const auto& [d, list] : subsets) total += list.size();
    REQUIRE(total == cycles.size());
}

TEST_CASE("manifest save/load round-trips exactly") {
    const std::string dir = fixtures::scratch_dir("manifest");
    const DatasetManifest manifest = synth_fixture(uniform_synth_spec(5, 4), 9, dir);
    REQUIRE(load_manifest(dir + "/manifest.tsv") == manifest);
}

TEST_CASE("dataset_stats matches generator bookkeeping") {
    const std::string dir = fixtures::scratch_dir("stats");
    SynthSpec spec = uniform_synth_spec(6, 10);
    const DatasetManifest manifest = synth_fixture(spec, 21, dir);
    const auto cycles = synth_cycles(spec, 21);

    std::array<std::int64_t, kNumClasses> class_counts{};
    std::array<std::int64_t, kNumDevices> device_counts{};
    for (const auto& c : cycles) {
        ++class_counts[static_cast<int>(c.label)];
        ++device_counts[static_cast<int>(c.meta.device)];
    }

    const DatasetStats stats = dataset_stats(manifest);
    REQUIRE(stats.total == 60);
    for (int c = 0; c < kNumClasses; ++c) REQUIRE(stats.class_totals[c] == class_counts[c]);
    for (int d = 0; d < kNumDevices; ++d) REQUIRE(stats.device_totals[d] == device_counts[d]);
    REQUIRE(stats.n_patients == 6);
    REQUIRE(stats.cycles_per_patient == Approx(10.0));

    std::int64_t histogram_total = 0;
    for (std::int64_t h : stats.length_histogram) histogram_total += h;
    REQUIRE(histogram_total == stats.total);

    REQUIRE(dataset_stats(DatasetManifest{}).total == 0);
}

TEST_CASE("stats totals equal extracted cycle count") {
    const std::string dir = fixtures::scratch_dir("stats-extract");
    const DatasetManifest manifest = synth_fixture(uniform_synth_spec(4, 7), 33, dir);
    const DatasetStats stats = dataset_stats(manifest);
    REQUIRE(static_cast<std::size_t>(stats.total) == load_cycles(manifest).size());
}

TEST_CASE("synth fixture has the requested shape and parses back") {
    const std::string dir = fixtures::scratch_dir("synth-shape");
    const DatasetManifest manifest = synth_fixture(uniform_synth_spec(8, 10), 3, dir);
    REQUIRE(manifest.entries.size() == 8);
    const auto cycles = load_cycles(manifest);
    REQUIRE(cycles.size() == 80);
    for (const auto& c : cycles) REQUIRE(c.samples.sample_rate == 4000);
}

TEST_CASE("synth audio is deterministic per seed") {
    const auto a = synth_cycles(uniform_synth_spec(3, 4), 123);
    const auto b = synth_cycles(uniform_synth_spec(3, 4), 123);
    const auto c = synth_cycles(uniform_synth_spec(3, 4), 124);
    REQUIRE(a.size() == b.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].samples.samples == b[i].samples.samples);
        if (a[i].samples.samples != c[i].samples.samples) any_diff = true;
    }
    REQUIRE(any_diff);
}

TEST_CASE("disk and in-memory synth agree up to int16 quantization") {
    const std::string dir = fixtures::scratch_dir("synth-disk");
    SynthSpec spec = uniform_synth_spec(3, 5);
    const DatasetManifest manifest = synth_fixture(spec, 77, dir);
    const auto from_disk = load_cycles(manifest);
    const auto in_memory = synth_cycles(spec, 77);
    REQUIRE(from_disk.size() == in_memory.size());
    for (std::size_t i = 0; i < from_disk.size(); ++i) {
        REQUIRE(from_disk[i].samples.samples.size() == in_memory[i].samples.samples.size());
        for (std::size_t k = 0; k < from_disk[i].samples.samples.size(); ++k)
            REQUIRE(from_disk[i].samples.samples[k] ==
                    Approx(in_memory[i].samples.samples[k]).margin(0.5 / 32768.0));
        REQUIRE(from_disk[i].label == in_memory[i].label);
        REQUIRE(from_disk[i].uid == in_memory[i].uid);
    }
}

TEST_CASE("generated wheeze cycles concentrate energy at the wheeze row") {
    SynthSpec spec;
    spec.patients = {{101, Device::AKGC417L, 12}, {102, Device::Meditron, 12}};
    const auto cycles = synth_cycles(spec, 55);
    const SpectrogramConfig config{};

    int tested = 0;
    for (const auto& c : cycles) {
        if (c.label != ClassLabel::Wheeze) continue;
        const MelSpectrogram spec_grid = mel_spectrogram(c.samples, config);
        std::vector<double> row_energy(spec_grid.values.rows, 0.0);
        for (int m = 0; m < spec_grid.values.rows; ++m)
            for (int f = 0; f < spec_grid.values.cols; ++f)
                row_energy[m] += std::exp(static_cast<double>(spec_grid.values.at(m, f)));

        int peak = 0;
        for (int m = 1; m < spec_grid.values.rows; ++m)
            if (row_energy[m] > row_energy[peak]) peak = m;
        // the peak row's band contains the 400 Hz wheeze tone
        REQUIRE(spec_grid.bin_edges_hz[peak].first < spec.wheeze_hz);
        REQUIRE(spec_grid.bin_edges_hz[peak].second > spec.wheeze_hz);
        // at least 6 dB above every row outside the tone's split pair
        for (int m = 0; m < spec_grid.values.rows; ++m) {
            if (std::abs(m - peak) <= 1) continue;
            REQUIRE(row_energy[peak] >= 4.0 * row_energy[m]);
        }
        ++tested;
    }
    REQUIRE(tested >= 3);
}

TEST_CASE("synth rejects bad specs") {
    SynthSpec spec;
    REQUIRE_THROWS_AS(synth_cycles(spec, 0), ConfigError);
    spec.patients = {{101, Device::Meditron, 0}};
    REQUIRE_THROWS_AS(synth_cycles(spec, 0), ConfigError);
    spec.patients = {{101, Device::Meditron, 2}};
    spec.class_mix = {0, 0, 0, 0};
    REQUIRE_THROWS_AS(synth_cycles(spec, 0), ConfigError);
}

TEST_CASE("scan_recording_dir builds the same manifest the generator wrote") {
    const std::string dir = fixtures::scratch_dir("scan");
    const DatasetManifest written = synth_fixture(uniform_synth_spec(4, 3), 8, dir);
    const DatasetManifest scanned = scan_recording_dir(dir);
    REQUIRE(scanned.entries.size() == written.entries.size());
    std::set<int> scanned_patients, written_patients;
    for (const auto& e : scanned.entries) scanned_patients.insert(e.meta.patient_id);
    for (const auto& e : written.entries) written_patients.insert(e.meta.patient_id);
    REQUIRE(scanned_patients == written_patients);
}
