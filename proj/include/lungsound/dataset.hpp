#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lungsound/audio.hpp"
#include "lungsound/error.hpp"
#include "lungsound/rng.hpp"

namespace lungsound {

enum class ClassLabel : int { Normal = 0, Crackle = 1, Wheeze = 2, Both = 3 };

constexpr int kNumClasses = 4;

inline const char* to_string(ClassLabel label) {
    switch (label) {
        case ClassLabel::Normal: return "normal";
        case ClassLabel::Crackle: return "crackle";
        case ClassLabel::Wheeze: return "wheeze";
        case ClassLabel::Both: return "both";
    }
    return "?";
}

enum class Device : int { AKGC417L = 0, Meditron = 1, Litt3200 = 2, LittC2SE = 3 };

constexpr int kNumDevices = 4;
constexpr std::array<Device, kNumDevices> kAllDevices = {Device::AKGC417L, Device::Meditron,
                                                         Device::Litt3200, Device::LittC2SE};

inline const char* to_string(Device device) {
    switch (device) {
        case Device::AKGC417L: return "AKGC417L";
        case Device::Meditron: return "Meditron";
        case Device::Litt3200: return "Litt3200";
        case Device::LittC2SE: return "LittC2SE";
    }
    return "?";
}

inline std::optional<Device> parse_device(const std::string& token) {
    for (Device d : kAllDevices)
        if (token == to_string(d)) return d;
    return std::nullopt;
}

inline ClassLabel label_from_flags(bool crackle, bool wheeze) {
    if (crackle && wheeze) return ClassLabel::Both;
    if (crackle) return ClassLabel::Crackle;
    if (wheeze) return ClassLabel::Wheeze;
    return ClassLabel::Normal;
}

struct RecordingMeta {
    int patient_id = 0;
    std::string recording_index;
    std::string chest_location;
    std::string acquisition_mode;
    Device device = Device::AKGC417L;

    bool operator==(const RecordingMeta&) const = default;
};

struct CycleAnnotation {
    double start_s = 0.0;
    double end_s = 0.0;
    bool crackle = false;
    bool wheeze = false;
};

// One annotated breathing cycle, the classification unit.
struct BreathingCycle {
    AudioClip samples;
    ClassLabel label = ClassLabel::Normal;
    RecordingMeta meta;
    int cycle_index = 0;
    std::int64_t uid = -1;
    double start_s = 0.0;
    double end_s = 0.0;
    // populated by concatenation-based augmentation
    std::vector<std::int64_t> sources;
};

// ICBHI convention: <patient>_<rec>_<loc>_<mode>_<device>.wav
inline RecordingMeta parse_recording_filename(const std::string& name) {
    std::string base = std::filesystem::path(name).filename().string();
    if (base.size() < 4 || base.substr(base.size() - 4) != ".wav")
        throw DataError("recording name must end in .wav: " + name);
    base = base.substr(0, base.size() - 4);

    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t us = base.find('_', pos);
        if (us == std::string::npos) {
            fields.push_back(base.substr(pos));
            break;
        }
        fields.push_back(base.substr(pos, us - pos));
        pos = us + 1;
    }
    if (fields.size() != 5)
        throw DataError("recording name needs 5 underscore-separated fields, got " +
                        std::to_string(fields.size()) + ": " + name);

    RecordingMeta meta;
    try {
        std::size_t used = 0;
        meta.patient_id = std::stoi(fields[0], &used);
        if (used != fields[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw DataError("recording name has non-numeric patient id '" + fields[0] + "': " + name);
    }
    meta.recording_index = fields[1];
    meta.chest_location = fields[2];
    meta.acquisition_mode = fields[3];
    const std::optional<Device> device = parse_device(fields[4]);
    if (!device) throw DataError("unknown device token '" + fields[4] + "' in " + name);
    meta.device = *device;
    return meta;
}

// One cycle per line: start end crackle wheeze, whitespace-separated.
inline std::vector<CycleAnnotation> parse_annotation_text(const std::string& text) {
    std::vector<CycleAnnotation> out;
    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;

        std::istringstream ls(line);
        double start, end;
        std::string cflag, wflag;
        if (!(ls >> start >> end >> cflag >> wflag))
            throw DataError("annotation line " + std::to_string(line_no) +
                            ": expected 'start end crackle wheeze'");
        std::string extra;
        if (ls >> extra)
            throw DataError("annotation line " + std::to_string(line_no) + ": trailing field '" +
                            extra + "'");
        if (!(0.0 <= start && start < end))
            throw DataError("annotation line " + std::to_string(line_no) +
                            ": need 0 <= start < end");
        if (cflag != "0" && cflag != "1")
            throw DataError("annotation line " + std::to_string(line_no) +
                            ": crackle flag must be 0 or 1");
        if (wflag != "0" && wflag != "1")
            throw DataError("annotation line " + std::to_string(line_no) +
                            ": wheeze flag must be 0 or 1");
        out.push_back(CycleAnnotation{start, end, cflag == "1", wflag == "1"});
    }
    return out;
}

inline std::vector<CycleAnnotation> parse_annotation_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("annotation: cannot open file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return parse_annotation_text(ss.str());
    } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + " in " + path);
    }
}

// Cuts annotated spans out of a recording. Spans overrunning the clip end by
// less than one analysis window are clamped with a warning.
inline std::vector<BreathingCycle> extract_cycles(const AudioClip& clip,
                                                  const std::vector<CycleAnnotation>& annotations,
                                                  const RecordingMeta& meta,
                                                  std::int64_t uid_base = 0,
                                                  int clamp_tolerance_samples = 256) {
    std::vector<BreathingCycle> out;
    const std::int64_t n = static_cast<std::int64_t>(clip.samples.size());
    int index = 0;
    for (const CycleAnnotation& ann : annotations) {
        std::int64_t begin = std::llround(ann.start_s * clip.sample_rate);
        std::int64_t end = std::llround(ann.end_s * clip.sample_rate);
        if (begin >= n)
            throw DataError("cycle " + std::to_string(index) + " of patient " +
                            std::to_string(meta.patient_id) + " lies outside the recording");
        if (end > n) {
            if (end - n >= clamp_tolerance_samples)
                throw DataError("cycle " + std::to_string(index) + " of patient " +
                                std::to_string(meta.patient_id) + " overruns the recording by " +
                                std::to_string(end - n) + " samples");
            warn("clamping cycle " + std::to_string(index) + " of patient " +
                 std::to_string(meta.patient_id) + " by " + std::to_string(end - n) + " samples");
            end = n;
        }
        BreathingCycle cycle;
        cycle.samples.sample_rate = clip.sample_rate;
        cycle.samples.samples.assign(clip.samples.begin() + begin, clip.samples.begin() + end);
        cycle.label = label_from_flags(ann.crackle, ann.wheeze);
        cycle.meta = meta;
        cycle.cycle_index = index;
        cycle.uid = uid_base + index;
        cycle.start_s = ann.start_s;
        cycle.end_s = ann.end_s;
        out.push_back(std::move(cycle));
        ++index;
    }
    return out;
}

struct ManifestEntry {
    std::string wav_path;
    std::string annotation_path;
    RecordingMeta meta;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    bool operator==(const DatasetManifest&) const = default;

    std::set<int> patient_ids() const {
        std::set<int> ids;
        for (const ManifestEntry& e : entries) ids.insert(e.meta.patient_id);
        return ids;
    }
};

// One recording per line: wav, annotation, then the parsed meta fields.
inline void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream os(path);
    if (!os) throw DataError("manifest: cannot create file: " + path);
    for (const ManifestEntry& e : manifest.entries) {
        os << e.wav_path << '\t' << e.annotation_path << '\t' << e.meta.patient_id << '\t'
           << e.meta.recording_index << '\t' << e.meta.chest_location << '\t'
           << e.meta.acquisition_mode << '\t' << to_string(e.meta.device) << '\n';
    }
    if (!os) throw DataError("manifest: write failed: " + path);
}

inline DatasetManifest load_manifest(const std::string& path, bool check_files = true) {
    std::ifstream is(path);
    if (!is) throw DataError("manifest: cannot open file: " + path);
    DatasetManifest manifest;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t tab = line.find('\t', pos);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        if (fields.size() != 7)
            throw DataError("manifest line " + std::to_string(line_no) + ": expected 7 fields");
        ManifestEntry e;
        e.wav_path = fields[0];
        e.annotation_path = fields[1];
        e.meta.patient_id = std::stoi(fields[2]);
        e.meta.recording_index = fields[3];
        e.meta.chest_location = fields[4];
        e.meta.acquisition_mode = fields[5];
        const std::optional<Device> device = parse_device(fields[6]);
        if (!device)
            throw DataError("manifest line " + std::to_string(line_no) + ": unknown device '" +
                            fields[6] + "'");
        e.meta.device = *device;
        if (check_files) {
            if (!std::filesystem::exists(e.wav_path))
                throw DataError("manifest line " + std::to_string(line_no) +
                                ": missing wav file " + e.wav_path);
            if (!std::filesystem::exists(e.annotation_path))
                throw DataError("manifest line " + std::to_string(line_no) +
                                ": missing annotation file " + e.annotation_path);
        }
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

// Builds a manifest from a directory laid out in the ICBHI distribution
// convention: recording wavs with a sibling .txt annotation each.
inline DatasetManifest scan_recording_dir(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir);
    DatasetManifest manifest;
    std::vector<std::filesystem::path> wavs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".wav") wavs.push_back(entry.path());
    }
    std::sort(wavs.begin(), wavs.end());
    for (const auto& wav : wavs) {
        std::filesystem::path ann = wav;
        ann.replace_extension(".txt");
        if (!std::filesystem::exists(ann))
            throw DataError("missing annotation file for " + wav.string());
        ManifestEntry e;
        e.wav_path = wav.string();
        e.annotation_path = ann.string();
        e.meta = parse_recording_filename(wav.filename().string());
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

// Loads every referenced recording and extracts its annotated cycles.
// uids are sequential in manifest order.
inline std::vector<BreathingCycle> load_cycles(const DatasetManifest& manifest) {
    std::vector<BreathingCycle> cycles;
    std::int64_t uid_base = 0;
    for (const ManifestEntry& e : manifest.entries) {
        const AudioClip clip = read_wav(e.wav_path);
        const std::vector<CycleAnnotation> anns = parse_annotation_file(e.annotation_path);
        std::vector<BreathingCycle> recording = extract_cycles(clip, anns, e.meta, uid_base);
        uid_base += static_cast<std::int64_t>(recording.size());
        for (BreathingCycle& c : recording) cycles.push_back(std::move(c));
    }
    return cycles;
}

// Patient-wise train/test partition.
struct SplitSpec {
    std::set<int> train_patients;
    std::set<int> test_patients;
    std::uint64_t seed = 0;
    double ratio = 0.8;

    bool is_train(int patient_id) const { return train_patients.count(patient_id) > 0; }
};

inline SplitSpec patient_split(const std::set<int>& patients, double ratio, std::uint64_t seed) {
    if (!(0.0 < ratio && ratio < 1.0)) throw ConfigError("split: ratio must be in (0, 1)");
    if (patients.size() < 2) throw DataError("split: need at least 2 patients");

    std::vector<int> ids(patients.begin(), patients.end());
    Rng rng(mix64(seed, 0x5eedu));
    for (std::size_t i = ids.size() - 1; i > 0; --i) {
        const std::size_t j = rng.below(i + 1);
        std::swap(ids[i], ids[j]);
    }
    const std::size_t n_train =
        static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(ids.size())));

    SplitSpec split;
    split.seed = seed;
    split.ratio = ratio;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i < n_train)
            split.train_patients.insert(ids[i]);
        else
            split.test_patients.insert(ids[i]);
    }
    return split;
}

inline SplitSpec patient_split(const DatasetManifest& manifest, double ratio, std::uint64_t seed) {
    return patient_split(manifest.patient_ids(), ratio, seed);
}

template <typename Pred>
inline std::vector<const BreathingCycle*> filter_cycles(const std::vector<BreathingCycle>& cycles,
                                                        Pred pred) {
    std::vector<const BreathingCycle*> out;
    for (const BreathingCycle& c : cycles)
        if (pred(c)) out.push_back(&c);
    return out;
}

// Partition by recording device; every known device gets a (possibly empty) list.
inline std::map<Device, std::vector<const BreathingCycle*>> device_subsets(
    const std::vector<const BreathingCycle*>& cycles) {
    std::map<Device, std::vector<const BreathingCycle*>> out;
    for (Device d : kAllDevices) out[d] = {};
    for (const BreathingCycle* c : cycles) out[c->meta.device].push_back(c);
    return out;
}

inline std::map<Device, std::vector<const BreathingCycle*>> device_subsets(
    const std::vector<BreathingCycle>& cycles) {
    std::vector<const BreathingCycle*> ptrs;
    ptrs.reserve(cycles.size());
    for (const BreathingCycle& c : cycles) ptrs.push_back(&c);
    return device_subsets(ptrs);
}

struct DatasetStats {
    // counts[class][device]
    std::array<std::array<std::int64_t, kNumDevices>, kNumClasses> counts{};
    std::array<std::int64_t, kNumClasses> class_totals{};
    std::array<std::int64_t, kNumDevices> device_totals{};
    std::int64_t total = 0;
    int n_patients = 0;
    double cycles_per_patient = 0.0;
    // half-second bins of cycle duration
    std::vector<std::int64_t> length_histogram;
    double histogram_bin_s = 0.5;
};

// Class/device tallies from annotation files alone; no audio is read.
inline DatasetStats dataset_stats(const DatasetManifest& manifest) {
    DatasetStats stats;
    std::set<int> patients;
    for (const ManifestEntry& e : manifest.entries) {
        patients.insert(e.meta.patient_id);
        const std::vector<CycleAnnotation> anns = parse_annotation_file(e.annotation_path);
        for (const CycleAnnotation& a : anns) {
            const int cls = static_cast<int>(label_from_flags(a.crackle, a.wheeze));
            const int dev = static_cast<int>(e.meta.device);
            ++stats.counts[cls][dev];
            ++stats.class_totals[cls];
            ++stats.device_totals[dev];
            ++stats.total;
            const double len = a.end_s - a.start_s;
            const std::size_t bin = static_cast<std::size_t>(len / stats.histogram_bin_s);
            if (stats.length_histogram.size() <= bin) stats.length_histogram.resize(bin + 1, 0);
            ++stats.length_histogram[bin];
        }
    }
    stats.n_patients = static_cast<int>(patients.size());
    stats.cycles_per_patient =
        stats.n_patients > 0 ? static_cast<double>(stats.total) / stats.n_patients : 0.0;
    return stats;
}

inline std::string format_stats(const DatasetStats& stats) {
    std::ostringstream os;
    os << "class\\device";
    for (Device d : kAllDevices) os << '\t' << to_string(d);
    os << "\ttotal\n";
    for (int c = 0; c < kNumClasses; ++c) {
        os << to_string(static_cast<ClassLabel>(c));
        for (int d = 0; d < kNumDevices; ++d) os << '\t' << stats.counts[c][d];
        os << '\t' << stats.class_totals[c] << '\n';
    }
    os << "total";
    for (int d = 0; d < kNumDevices; ++d) os << '\t' << stats.device_totals[d];
    os << '\t' << stats.total << '\n';
    os << "patients\t" << stats.n_patients << "\n";
    os << "cycles_per_patient\t" << stats.cycles_per_patient << "\n";
    os << "length_histogram_s";
    for (std::size_t i = 0; i < stats.length_histogram.size(); ++i)
        os << '\t' << i * stats.histogram_bin_s << ":" << stats.length_histogram[i];
    os << '\n';
    return os.str();
}

}  // namespace lungsound
