#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lungsound/config.hpp"
#include "lungsound/dataset.hpp"
#include "lungsound/pipeline.hpp"
#include "lungsound/synth.hpp"

namespace lungsound {
namespace cli {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

namespace detail {

inline void emit_error(int code, const char* kind, const std::string& message) {
    json j;
    j["error"] = {{"code", code}, {"kind", kind}, {"message", message}};
    std::cerr << j.dump() << std::endl;
}

struct DataArgs {
    std::string manifest;
    std::string data_dir;
    std::string split_file;
    std::string side = "all";  // train | test | all
};

inline DatasetManifest resolve_manifest(const DataArgs& args) {
    if (!args.manifest.empty()) return load_manifest(args.manifest);
    if (!args.data_dir.empty()) return scan_recording_dir(args.data_dir);
    throw ConfigError("need --manifest or --data");
}

inline std::vector<const BreathingCycle*> select_side(const std::vector<BreathingCycle>& cycles,
                                                      const SplitSpec& split,
                                                      const std::string& side) {
    std::vector<const BreathingCycle*> out;
    for (const BreathingCycle& c : cycles) {
        const bool in_train = split.is_train(c.meta.patient_id);
        if (side == "train" ? in_train : !in_train) out.push_back(&c);
    }
    return out;
}

inline SplitSpec resolve_split(const RunConfig& config, const DatasetManifest& manifest) {
    if (!config.split_file.empty()) return load_split(config.split_file);
    return patient_split(manifest, config.split_ratio, config.split_seed);
}

struct RunPaths {
    std::string dir;
    std::string config() const { return dir + "/config.json"; }
    std::string stage1() const { return dir + "/stage1.ckpt"; }
    std::string stage2(Device d) const { return dir + "/stage2-" + std::string(to_string(d)) + ".ckpt"; }
    std::string metrics(const std::string& tag) const { return dir + "/metrics-" + tag + ".log"; }
    std::string report_json() const { return dir + "/report.json"; }
    std::string report_txt() const { return dir + "/report.txt"; }
};

inline void write_metrics_log(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot create file: " + path);
    for (const EpochStats& e : history) {
        json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_acc", e.train_acc}};
        if (!std::isnan(e.val_score)) j["val_score"] = e.val_score;
        os << j.dump() << '\n';
    }
}

inline json audit_json(const RunConfig& config) {
    const TrainConfig& t = config.pipeline.train;
    return json{{"aug_cba", t.aug_cba},
                {"aug_standard", t.aug_standard},
                {"brc", t.brc},
                {"pad", std::string(to_string(t.pad_policy))},
                {"task", config.pipeline.task}};
}

}  // namespace detail

inline int run(const std::vector<std::string>& args) {
    using namespace detail;

    CLI::App app{"lung-sound classification pipeline"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset fixture");
    struct {
        std::string out;
        std::uint64_t seed = 0;
        int patients = 8;
        int cycles = 10;
        std::string config;
    } synth_args;
    synth->add_option("--out", synth_args.out, "output directory")->required();
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_option("--patients", synth_args.patients, "patient count (uniform spec)");
    synth->add_option("--cycles", synth_args.cycles, "cycles per patient (uniform spec)");
    synth->add_option("--config", synth_args.config, "synth spec JSON");

    // ---- stats ----
    auto* stats = app.add_subcommand("stats", "dataset class/device statistics");
    DataArgs stats_args;
    stats->add_option("--manifest", stats_args.manifest, "manifest file");
    stats->add_option("--data", stats_args.data_dir, "recording directory");

    // ---- split ----
    auto* split_cmd = app.add_subcommand("split", "emit a patient-wise split file");
    struct {
        DataArgs data;
        double ratio = 0.8;
        std::uint64_t seed = 0;
        std::string out;
        std::string from_list;
    } split_args;
    split_cmd->add_option("--manifest", split_args.data.manifest, "manifest file");
    split_cmd->add_option("--data", split_args.data.data_dir, "recording directory");
    split_cmd->add_option("--ratio", split_args.ratio, "train fraction of patients");
    split_cmd->add_option("--seed", split_args.seed, "shuffle seed");
    split_cmd->add_option("--out", split_args.out, "output split JSON")->required();
    split_cmd->add_option("--from-list", split_args.from_list,
                          "explicit list: one '<patient> train|test' per line");

    // ---- preprocess ----
    auto* pre = app.add_subcommand("preprocess", "dump model-ready mel grids");
    struct {
        DataArgs data;
        std::string config;
        std::string out;
        bool pgm = false;
    } pre_args;
    pre->add_option("--manifest", pre_args.data.manifest, "manifest file");
    pre->add_option("--data", pre_args.data.data_dir, "recording directory");
    pre->add_option("--split", pre_args.data.split_file, "split JSON; with --side");
    pre->add_option("--side", pre_args.data.side, "train|test|all")->check(CLI::IsMember({"train", "test", "all"}));
    pre->add_option("--config", pre_args.config, "run config JSON");
    pre->add_option("--out", pre_args.out, "output directory")->required();
    pre->add_flag("--pgm", pre_args.pgm, "also write grayscale dumps");

    // ---- shared train/finetune/evaluate/sweep options ----
    struct PipelineArgs {
        DataArgs data;
        std::string config;
        std::string run_dir;
        std::string task;
        std::uint64_t seed = 0;
        bool seed_set = false;
        int epochs1 = -1, epochs2 = -1;
        double target_len = -1.0;
        std::string pad;
        int no_cba = 0, no_std = 0, no_brc = 0;
        int workers = -1;
        int batch = -1;
        int stage = 0;
        std::string lengths = "1,2,3,4,5,6,7,8,9";
        std::string device_filter;
    };

    auto add_common = [](CLI::App* cmd, PipelineArgs& a, bool needs_run) {
        cmd->add_option("--manifest", a.data.manifest, "manifest file");
        cmd->add_option("--data", a.data.data_dir, "recording directory");
        cmd->add_option("--split", a.data.split_file, "split JSON file");
        cmd->add_option("--config", a.config, "run config JSON");
        auto* run_opt = cmd->add_option("--run", a.run_dir, "run directory");
        if (needs_run) run_opt->required();
        cmd->add_option("--task", a.task, "4class|2class")->check(CLI::IsMember({"4class", "2class"}));
        cmd->add_option("--seed", a.seed, "training seed")->each([&a](const std::string&) { a.seed_set = true; });
        cmd->add_option("--epochs1", a.epochs1, "stage-1 epochs");
        cmd->add_option("--epochs2", a.epochs2, "stage-2 epochs");
        cmd->add_option("--target-len", a.target_len, "input window seconds");
        cmd->add_option("--pad", a.pad, "smart|zero|reflect")->check(CLI::IsMember({"smart", "zero", "reflect"}));
        cmd->add_flag("--no-cba", a.no_cba, "disable concatenation augmentation");
        cmd->add_flag("--no-std-aug", a.no_std, "disable standard augmentations");
        cmd->add_flag("--no-brc", a.no_brc, "disable blank region clipping");
        cmd->add_option("--workers", a.workers, "preprocessing workers");
        cmd->add_option("--batch", a.batch, "batch size");
        cmd->add_option("--device-filter", a.device_filter, "train on one device only");
    };

    auto* train = app.add_subcommand("train", "stage-1 training");
    PipelineArgs train_args;
    add_common(train, train_args, true);

    auto* finetune = app.add_subcommand("finetune", "stage-2 device fine-tuning");
    PipelineArgs ft_args;
    add_common(finetune, ft_args, true);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a run on the test split");
    PipelineArgs eval_args;
    add_common(evaluate_cmd, eval_args, true);
    evaluate_cmd->add_option("--stage", eval_args.stage, "1 = stage-1 model, 2 = device models (default: 2 if present)");

    auto* sweep = app.add_subcommand("sweep", "input-length ablation");
    PipelineArgs sweep_args;
    add_common(sweep, sweep_args, false);
    sweep->add_option("--lengths", sweep_args.lengths, "comma-separated seconds");
    std::string sweep_out;
    sweep->add_option("--out", sweep_out, "output TSV");

    auto* report_cmd = app.add_subcommand("report", "format a run's report tables");
    std::string report_run;
    report_cmd->add_option("--run", report_run, "run directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            std::cout << app.help() << std::endl;
            return kExitOk;
        }
        emit_error(kExitConfig, "config", e.what());
        return kExitConfig;
    }

    auto load_config = [](const PipelineArgs& a) {
        RunConfig config;
        if (!a.config.empty()) config = load_run_config(a.config);
        if (!a.data.manifest.empty()) config.manifest_path = a.data.manifest;
        if (!a.data.split_file.empty()) config.split_file = a.data.split_file;
        if (!a.task.empty()) {
            config.pipeline.task = a.task;
            config.pipeline.arch.n_classes = a.task == "2class" ? 2 : 4;
        }
        if (a.seed_set) config.pipeline.train.seed = a.seed;
        if (a.epochs1 >= 0) config.pipeline.train.epochs_stage1 = a.epochs1;
        if (a.epochs2 >= 0) config.pipeline.train.epochs_stage2 = a.epochs2;
        if (a.target_len > 0) config.pipeline.train.target_len_s = a.target_len;
        if (!a.pad.empty()) config.pipeline.train.pad_policy = parse_pad_policy(a.pad);
        if (a.no_cba) config.pipeline.train.aug_cba = false;
        if (a.no_std) config.pipeline.train.aug_standard = false;
        if (a.no_brc) config.pipeline.train.brc = false;
        if (a.workers > 0) config.pipeline.train.workers = a.workers;
        if (a.batch > 0) config.pipeline.train.batch_size = a.batch;
        if (!a.device_filter.empty()) {
            const auto d = parse_device(a.device_filter);
            if (!d) throw ConfigError("unknown device '" + a.device_filter + "'");
            config.pipeline.train.device_filter = static_cast<int>(*d);
        }
        config.pipeline.validate();
        return config;
    };

    auto load_data = [](const RunConfig& config, const DataArgs& args) {
        DataArgs resolved = args;
        if (resolved.manifest.empty()) resolved.manifest = config.manifest_path;
        const DatasetManifest manifest = resolve_manifest(resolved);
        return manifest;
    };

    try {
        if (*synth) {
            SynthSpec spec;
            if (!synth_args.config.empty())
                spec = synth_spec_from_json(parse_json_file(synth_args.config));
            else
                spec = uniform_synth_spec(synth_args.patients, synth_args.cycles);
            const DatasetManifest manifest = synth_fixture(spec, synth_args.seed, synth_args.out);
            std::cout << "wrote " << manifest.entries.size() << " recordings to " << synth_args.out
                      << std::endl;
            return kExitOk;
        }

        if (*stats) {
            const DatasetManifest manifest = resolve_manifest(stats_args);
            std::cout << format_stats(dataset_stats(manifest));
            return kExitOk;
        }

        if (*split_cmd) {
            SplitSpec split;
            if (!split_args.from_list.empty()) {
                std::ifstream is(split_args.from_list);
                if (!is) throw DataError("cannot open file: " + split_args.from_list);
                std::string token;
                int pid;
                while (is >> pid >> token) {
                    if (token == "train")
                        split.train_patients.insert(pid);
                    else if (token == "test")
                        split.test_patients.insert(pid);
                    else
                        throw DataError("split list: expected train|test, got '" + token + "'");
                }
                split.ratio = 0.0;
            } else {
                const DatasetManifest manifest = resolve_manifest(split_args.data);
                split = patient_split(manifest, split_args.ratio, split_args.seed);
            }
            save_split(split_args.out, split);
            std::cout << "train=" << split.train_patients.size()
                      << " test=" << split.test_patients.size() << std::endl;
            return kExitOk;
        }

        if (*pre) {
            RunConfig config;
            if (!pre_args.config.empty()) config = load_run_config(pre_args.config);
            const DatasetManifest manifest = load_data(config, pre_args.data);
            std::vector<BreathingCycle> cycles = load_cycles(manifest);
            std::vector<const BreathingCycle*> selected;
            if (!pre_args.data.split_file.empty() && pre_args.data.side != "all") {
                const SplitSpec split = load_split(pre_args.data.split_file);
                selected = select_side(cycles, split, pre_args.data.side);
            } else {
                for (const BreathingCycle& c : cycles) selected.push_back(&c);
            }
            std::filesystem::create_directories(pre_args.out);
            const PrepChain chain = make_prep_chain(config.pipeline);
            pipeline_detail::PreppedSet set =
                pipeline_detail::prep_set(selected, chain, config.pipeline.train.workers);
            for (std::size_t i = 0; i < set.cycles.size(); ++i) {
                const MelSpectrogram grid =
                    pipeline_detail::eval_sample(set, static_cast<int>(i), config.pipeline);
                const std::string stem =
                    pre_args.out + "/cycle-" + std::to_string(set.cycles[i].uid);
                write_melgrid(stem + ".melgrid", grid);
                if (pre_args.pgm) write_pgm(stem + ".pgm", grid);
            }
            std::cout << "wrote " << set.cycles.size() << " grids to " << pre_args.out << std::endl;
            return kExitOk;
        }

        if (*train) {
            RunConfig config = load_config(train_args);
            const DatasetManifest manifest = load_data(config, train_args.data);
            const SplitSpec split = resolve_split(config, manifest);
            const std::vector<BreathingCycle> cycles = load_cycles(manifest);
            std::vector<const BreathingCycle*> train_side;
            for (const BreathingCycle& c : cycles)
                if (split.is_train(c.meta.patient_id)) train_side.push_back(&c);
            std::vector<const BreathingCycle*> tr, val;
            carve_validation(train_side, config.pipeline.train.val_fraction,
                             config.pipeline.train.seed, tr, val);

            const RunPaths paths{train_args.run_dir};
            std::filesystem::create_directories(paths.dir);
            config.out_dir = paths.dir;
            save_run_config(paths.config(), config);
            save_split(paths.dir + "/split.json", split);

            const StageOneResult result = train_stage1(tr, val, config.pipeline);
            save_checkpoint(paths.stage1(), result.model, nullptr,
                            CheckpointMeta{1, static_cast<std::uint32_t>(std::max(result.best_epoch, 0)),
                                           config.pipeline.train.seed});
            write_metrics_log(paths.metrics("stage1"), result.history);
            std::cout << "stage1 best epoch " << result.best_epoch << " val score "
                      << format_pct(result.best_score) << std::endl;
            return kExitOk;
        }

        if (*finetune) {
            const RunPaths paths{ft_args.run_dir};
            RunConfig config = load_config(ft_args);
            if (ft_args.config.empty() && std::filesystem::exists(paths.config())) {
                config = load_run_config(paths.config());
                RunConfig overrides = load_config(ft_args);
                if (!ft_args.data.manifest.empty()) config.manifest_path = overrides.manifest_path;
                if (!ft_args.data.split_file.empty()) config.split_file = overrides.split_file;
                if (ft_args.epochs2 >= 0)
                    config.pipeline.train.epochs_stage2 = overrides.pipeline.train.epochs_stage2;
            }
            const DatasetManifest manifest = load_data(config, ft_args.data);
            SplitSpec split;
            if (std::filesystem::exists(paths.dir + "/split.json") && config.split_file.empty())
                split = load_split(paths.dir + "/split.json");
            else
                split = resolve_split(config, manifest);
            const std::vector<BreathingCycle> cycles = load_cycles(manifest);
            std::vector<const BreathingCycle*> train_side;
            for (const BreathingCycle& c : cycles)
                if (split.is_train(c.meta.patient_id)) train_side.push_back(&c);

            const LoadedCheckpoint stage1 = load_checkpoint(paths.stage1());
            std::map<Device, std::vector<EpochStats>> histories;
            DeviceModelSet set =
                finetune_stage2(stage1.net, train_side, config.pipeline, &histories);
            for (const auto& [device, model] : set.models) {
                save_checkpoint(paths.stage2(device), model, nullptr,
                                CheckpointMeta{2, static_cast<std::uint32_t>(
                                                      config.pipeline.train.epochs_stage2),
                                               config.pipeline.train.seed});
                write_metrics_log(paths.metrics(std::string("stage2-") + to_string(device)),
                                  histories[device]);
            }
            std::cout << "fine-tuned " << set.models.size() << " device models" << std::endl;
            return kExitOk;
        }

        if (*evaluate_cmd) {
            const RunPaths paths{eval_args.run_dir};
            RunConfig config;
            if (!eval_args.config.empty())
                config = load_config(eval_args);
            else if (std::filesystem::exists(paths.config())) {
                config = load_run_config(paths.config());
                if (!eval_args.data.manifest.empty()) config.manifest_path = eval_args.data.manifest;
                if (!eval_args.data.split_file.empty()) config.split_file = eval_args.data.split_file;
                if (!eval_args.task.empty()) config.pipeline.task = eval_args.task;
            } else
                config = load_config(eval_args);

            const DatasetManifest manifest = load_data(config, eval_args.data);
            SplitSpec split;
            if (std::filesystem::exists(paths.dir + "/split.json") && config.split_file.empty())
                split = load_split(paths.dir + "/split.json");
            else
                split = resolve_split(config, manifest);
            const std::vector<BreathingCycle> cycles = load_cycles(manifest);
            std::vector<const BreathingCycle*> test_side;
            for (const BreathingCycle& c : cycles)
                if (!split.is_train(c.meta.patient_id)) test_side.push_back(&c);

            LoadedCheckpoint stage1 = load_checkpoint(paths.stage1());
            // 2-class reports from a 4-class model collapse predictions
            if (config.pipeline.task == "2class" && stage1.net.config.n_classes == 4)
                config.pipeline.arch = stage1.net.config;
            bool use_stage2 = eval_args.stage != 1;
            DeviceModelSet set;
            set.fallback = stage1.net;
            if (use_stage2) {
                for (Device d : kAllDevices) {
                    const std::string p = paths.stage2(d);
                    if (std::filesystem::exists(p)) set.models.emplace(d, load_checkpoint(p).net);
                }
                if (set.models.empty()) {
                    if (eval_args.stage == 2)
                        throw DataError("no stage-2 checkpoints in " + paths.dir);
                    use_stage2 = false;
                }
            }

            EvalReport report = use_stage2 ? evaluate(&set, test_side, config.pipeline)
                                           : evaluate(&stage1.net, test_side, config.pipeline);
            json rj = report_to_json(report);
            rj["audit"] = audit_json(config);
            rj["stage"] = use_stage2 ? 2 : 1;
            std::ofstream os(paths.report_json());
            os << rj.dump(2) << '\n';
            std::ofstream ot(paths.report_txt());
            ot << format_report(report);
            std::cout << format_report(report);
            return kExitOk;
        }

        if (*sweep) {
            RunConfig config = load_config(sweep_args);
            const DatasetManifest manifest = load_data(config, sweep_args.data);
            const SplitSpec split = resolve_split(config, manifest);
            const std::vector<BreathingCycle> cycles = load_cycles(manifest);
            std::vector<const BreathingCycle*> train_side, test_side;
            for (const BreathingCycle& c : cycles)
                (split.is_train(c.meta.patient_id) ? train_side : test_side).push_back(&c);
            std::vector<const BreathingCycle*> tr, val;
            carve_validation(train_side, config.pipeline.train.val_fraction,
                             config.pipeline.train.seed, tr, val);

            std::vector<double> lengths;
            std::stringstream ss(sweep_args.lengths);
            std::string tok;
            while (std::getline(ss, tok, ',')) lengths.push_back(std::stod(tok));

            const std::vector<SweepRow> rows =
                input_length_sweep(lengths, tr, val, test_side, config.pipeline);
            std::ostringstream table;
            table << "length_s\tscore\n";
            for (const SweepRow& r : rows) table << r.length_s << '\t' << format_pct(r.score) << '\n';
            if (!sweep_out.empty()) {
                std::ofstream os(sweep_out);
                os << table.str();
            }
            std::cout << table.str();
            return kExitOk;
        }

        if (*report_cmd) {
            const RunPaths paths{report_run};
            std::ifstream is(paths.report_txt());
            if (!is) throw DataError("no report in " + paths.dir + "; run evaluate first");
            std::cout << is.rdbuf();
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        emit_error(kExitConfig, "config", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        emit_error(kExitData, "data", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        emit_error(kExitRuntime, "runtime", e.what());
        return kExitRuntime;
    }

    emit_error(kExitConfig, "config", "unknown subcommand");
    return kExitConfig;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
    return run(args);
}

}  // namespace cli
}  // namespace lungsound
