#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lungsound/error.hpp"
#include "lungsound/metrics.hpp"
#include "lungsound/pipeline.hpp"
#include "lungsound/synth.hpp"

namespace lungsound {

using json = nlohmann::json;

namespace config_detail {

// Tracks which keys were consumed so unknown keys can be rejected.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: " + path_ + " must be an object");
    }

    bool has(const char* key) {
        return j_.contains(key);
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for " + path_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        if (!j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key()))
                throw ConfigError("config: unknown key " + path_ + "." + item.key());
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace config_detail

// The full configuration tree for one reproducible run.
struct RunConfig {
    std::string manifest_path;
    std::string out_dir;
    std::string split_file;
    double split_ratio = 0.8;
    std::uint64_t split_seed = 0;
    PipelineConfig pipeline;

    bool operator==(const RunConfig&) const = default;
};

inline json to_json(const RunConfig& c) {
    json j;
    j["data"] = {{"manifest", c.manifest_path}, {"out_dir", c.out_dir}};
    j["split"] = {{"file", c.split_file}, {"ratio", c.split_ratio}, {"seed", c.split_seed}};
    j["preprocess"] = {{"target_rate", c.pipeline.target_rate},
                       {"band_low", c.pipeline.band_low},
                       {"band_high", c.pipeline.band_high},
                       {"filter_order", c.pipeline.filter_order}};
    j["spectrogram"] = {{"window_len", c.pipeline.spectro.window_len},
                        {"hop_len", c.pipeline.spectro.hop_len},
                        {"n_mels", c.pipeline.spectro.n_mels},
                        {"fmin", c.pipeline.spectro.fmin},
                        {"fmax", c.pipeline.spectro.fmax},
                        {"log_floor", c.pipeline.spectro.log_floor}};
    j["blank_clip"] = {{"floor_margin_db", c.pipeline.blank.floor_margin_db},
                       {"protect_below_hz", c.pipeline.blank.protect_below_hz}};
    j["augment"] = {{"noise_snr_db", c.pipeline.aug.noise_snr_db},
                    {"speed_factor_min", c.pipeline.aug.speed_factor_range.first},
                    {"speed_factor_max", c.pipeline.aug.speed_factor_range.second},
                    {"shift_max_s", c.pipeline.aug.shift_max_s},
                    {"pitch_semitones_min", c.pipeline.aug.pitch_semitone_range.first},
                    {"pitch_semitones_max", c.pipeline.aug.pitch_semitone_range.second}};
    json stages = json::array();
    for (const auto& [ch, stride] : c.pipeline.arch.conv_stages) stages.push_back({ch, stride});
    j["arch"] = {{"input_mels", c.pipeline.arch.input_mels},
                 {"conv_stages", stages},
                 {"res_blocks_per_stage", c.pipeline.arch.res_blocks_per_stage},
                 {"fc_widths", c.pipeline.arch.fc_widths},
                 {"n_classes", c.pipeline.arch.n_classes},
                 {"dropout_rate", c.pipeline.arch.dropout_rate},
                 {"standardize_input", c.pipeline.arch.standardize_input}};
    j["train"] = {{"target_len_s", c.pipeline.train.target_len_s},
                  {"batch_size", c.pipeline.train.batch_size},
                  {"lr_stage1", c.pipeline.train.lr_stage1},
                  {"lr_stage2", c.pipeline.train.lr_stage2},
                  {"momentum", c.pipeline.train.momentum},
                  {"epochs_stage1", c.pipeline.train.epochs_stage1},
                  {"epochs_stage2", c.pipeline.train.epochs_stage2},
                  {"seed", c.pipeline.train.seed},
                  {"aug_cba", c.pipeline.train.aug_cba},
                  {"aug_standard", c.pipeline.train.aug_standard},
                  {"brc", c.pipeline.train.brc},
                  {"pad", std::string(to_string(c.pipeline.train.pad_policy))},
                  {"cba_prob", c.pipeline.train.cba_prob},
                  {"standard_prob", c.pipeline.train.standard_prob},
                  {"noise_snr_lo", c.pipeline.train.noise_snr_lo},
                  {"noise_snr_hi", c.pipeline.train.noise_snr_hi},
                  {"stop_at_train_acc", c.pipeline.train.stop_at_train_acc},
                  {"workers", c.pipeline.train.workers},
                  {"device_filter", c.pipeline.train.device_filter},
                  {"val_fraction", c.pipeline.train.val_fraction}};
    j["task"] = c.pipeline.task;
    return j;
}

// Strict parse: unknown keys anywhere in the tree are rejected.
inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    config_detail::Reader root(j, "$");
    if (const json* data = root.child("data")) {
        config_detail::Reader r(*data, "data");
        r.get("manifest", c.manifest_path);
        r.get("out_dir", c.out_dir);
        r.finish();
    }
    if (const json* split = root.child("split")) {
        config_detail::Reader r(*split, "split");
        r.get("file", c.split_file);
        r.get("ratio", c.split_ratio);
        r.get("seed", c.split_seed);
        r.finish();
    }
    if (const json* pre = root.child("preprocess")) {
        config_detail::Reader r(*pre, "preprocess");
        r.get("target_rate", c.pipeline.target_rate);
        r.get("band_low", c.pipeline.band_low);
        r.get("band_high", c.pipeline.band_high);
        r.get("filter_order", c.pipeline.filter_order);
        r.finish();
    }
    if (const json* sp = root.child("spectrogram")) {
        config_detail::Reader r(*sp, "spectrogram");
        r.get("window_len", c.pipeline.spectro.window_len);
        r.get("hop_len", c.pipeline.spectro.hop_len);
        r.get("n_mels", c.pipeline.spectro.n_mels);
        r.get("fmin", c.pipeline.spectro.fmin);
        r.get("fmax", c.pipeline.spectro.fmax);
        r.get("log_floor", c.pipeline.spectro.log_floor);
        r.finish();
    }
    if (const json* bc = root.child("blank_clip")) {
        config_detail::Reader r(*bc, "blank_clip");
        r.get("floor_margin_db", c.pipeline.blank.floor_margin_db);
        r.get("protect_below_hz", c.pipeline.blank.protect_below_hz);
        r.finish();
    }
    if (const json* aug = root.child("augment")) {
        config_detail::Reader r(*aug, "augment");
        r.get("noise_snr_db", c.pipeline.aug.noise_snr_db);
        r.get("speed_factor_min", c.pipeline.aug.speed_factor_range.first);
        r.get("speed_factor_max", c.pipeline.aug.speed_factor_range.second);
        r.get("shift_max_s", c.pipeline.aug.shift_max_s);
        r.get("pitch_semitones_min", c.pipeline.aug.pitch_semitone_range.first);
        r.get("pitch_semitones_max", c.pipeline.aug.pitch_semitone_range.second);
        r.finish();
    }
    if (const json* arch = root.child("arch")) {
        config_detail::Reader r(*arch, "arch");
        r.get("input_mels", c.pipeline.arch.input_mels);
        std::vector<std::vector<int>> stages;
        r.get("conv_stages", stages);
        if (!stages.empty()) {
            c.pipeline.arch.conv_stages.clear();
            for (const auto& s : stages) {
                if (s.size() != 2)
                    throw ConfigError("config: arch.conv_stages entries must be [channels, stride]");
                c.pipeline.arch.conv_stages.push_back({s[0], s[1]});
            }
        }
        r.get("res_blocks_per_stage", c.pipeline.arch.res_blocks_per_stage);
        r.get("fc_widths", c.pipeline.arch.fc_widths);
        r.get("n_classes", c.pipeline.arch.n_classes);
        r.get("dropout_rate", c.pipeline.arch.dropout_rate);
        r.get("standardize_input", c.pipeline.arch.standardize_input);
        r.finish();
    }
    if (const json* train = root.child("train")) {
        config_detail::Reader r(*train, "train");
        r.get("target_len_s", c.pipeline.train.target_len_s);
        r.get("batch_size", c.pipeline.train.batch_size);
        r.get("lr_stage1", c.pipeline.train.lr_stage1);
        r.get("lr_stage2", c.pipeline.train.lr_stage2);
        r.get("momentum", c.pipeline.train.momentum);
        r.get("epochs_stage1", c.pipeline.train.epochs_stage1);
        r.get("epochs_stage2", c.pipeline.train.epochs_stage2);
        r.get("seed", c.pipeline.train.seed);
        r.get("aug_cba", c.pipeline.train.aug_cba);
        r.get("aug_standard", c.pipeline.train.aug_standard);
        r.get("brc", c.pipeline.train.brc);
        std::string pad = to_string(c.pipeline.train.pad_policy);
        r.get("pad", pad);
        c.pipeline.train.pad_policy = parse_pad_policy(pad);
        r.get("cba_prob", c.pipeline.train.cba_prob);
        r.get("standard_prob", c.pipeline.train.standard_prob);
        r.get("noise_snr_lo", c.pipeline.train.noise_snr_lo);
        r.get("noise_snr_hi", c.pipeline.train.noise_snr_hi);
        r.get("stop_at_train_acc", c.pipeline.train.stop_at_train_acc);
        r.get("workers", c.pipeline.train.workers);
        r.get("device_filter", c.pipeline.train.device_filter);
        r.get("val_fraction", c.pipeline.train.val_fraction);
        r.finish();
    }
    root.get("task", c.pipeline.task);
    root.finish();
    return c;
}

inline json parse_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open file: " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(parse_json_file(path));
}

inline void save_run_config(const std::string& path, const RunConfig& c) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot create file: " + path);
    os << to_json(c).dump(2) << '\n';
}

// ---- split file ----

inline void save_split(const std::string& path, const SplitSpec& split) {
    json j;
    j["train_patients"] = std::vector<int>(split.train_patients.begin(), split.train_patients.end());
    j["test_patients"] = std::vector<int>(split.test_patients.begin(), split.test_patients.end());
    j["seed"] = split.seed;
    j["ratio"] = split.ratio;
    std::ofstream os(path);
    if (!os) throw DataError("cannot create file: " + path);
    os << j.dump(2) << '\n';
}

inline SplitSpec load_split(const std::string& path) {
    const json j = parse_json_file(path);
    SplitSpec split;
    config_detail::Reader r(j, "split");
    std::vector<int> train, test;
    r.get("train_patients", train);
    r.get("test_patients", test);
    r.get("seed", split.seed);
    r.get("ratio", split.ratio);
    r.finish();
    split.train_patients.insert(train.begin(), train.end());
    split.test_patients.insert(test.begin(), test.end());
    for (int p : split.train_patients)
        if (split.test_patients.count(p))
            throw DataError("split: patient " + std::to_string(p) + " on both sides");
    return split;
}

// ---- synth spec ----

inline SynthSpec synth_spec_from_json(const json& j) {
    SynthSpec spec;
    config_detail::Reader root(j, "$");
    if (const json* patients = root.child("patients")) {
        if (!patients->is_array()) throw ConfigError("synth config: patients must be an array");
        spec.patients.clear();
        int i = 0;
        for (const json& pj : *patients) {
            config_detail::Reader r(pj, "patients[" + std::to_string(i) + "]");
            PatientSpec p;
            r.get("id", p.patient_id);
            std::string device = to_string(p.device);
            r.get("device", device);
            const auto d = parse_device(device);
            if (!d) throw ConfigError("synth config: unknown device '" + device + "'");
            p.device = *d;
            r.get("cycles", p.n_cycles);
            r.finish();
            spec.patients.push_back(p);
            ++i;
        }
    }
    std::vector<double> mix;
    root.get("class_mix", mix);
    if (!mix.empty()) {
        if (mix.size() != kNumClasses)
            throw ConfigError("synth config: class_mix needs 4 entries");
        for (int k = 0; k < kNumClasses; ++k) spec.class_mix[k] = mix[k];
    }
    root.get("sample_rate", spec.sample_rate);
    root.get("min_cycle_s", spec.min_cycle_s);
    root.get("max_cycle_s", spec.max_cycle_s);
    root.get("wheeze_hz", spec.wheeze_hz);
    root.get("wheeze_amp", spec.wheeze_amp);
    root.get("crackle_amp", spec.crackle_amp);
    root.get("noise_amp", spec.noise_amp);
    root.get("fade_s", spec.fade_s);
    root.finish();
    return spec;
}

// ---- report serialization ----

inline json report_to_json(const EvalReport& report) {
    json j;
    j["task"] = report.task;
    j["sp"] = report.sp;
    j["se"] = report.se;
    j["score"] = report.score;
    json matrix = json::array();
    for (int t = 0; t < report.matrix.dim; ++t) {
        json row = json::array();
        for (int p = 0; p < report.matrix.dim; ++p) row.push_back(report.matrix.at(t, p));
        matrix.push_back(row);
    }
    j["matrix"] = matrix;
    json per_class;
    for (const auto& [cls, acc] : report.per_class) per_class[class_name(report.task, cls)] = acc;
    j["per_class"] = per_class;
    json per_device;
    for (const auto& [device, d] : report.per_device) {
        json dj;
        dj["n"] = d.n;
        if (d.se) dj["se"] = *d.se;
        if (d.sp) dj["sp"] = *d.sp;
        if (d.score) dj["score"] = *d.score;
        json pc;
        for (const auto& [cls, acc] : d.per_class) pc[class_name(report.task, cls)] = acc;
        dj["per_class"] = pc;
        per_device[to_string(device)] = dj;
    }
    j["per_device"] = per_device;
    return j;
}

}  // namespace lungsound
