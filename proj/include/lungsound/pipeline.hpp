#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "lungsound/augment.hpp"
#include "lungsound/dataset.hpp"
#include "lungsound/filter.hpp"
#include "lungsound/metrics.hpp"
#include "lungsound/model.hpp"
#include "lungsound/spectrogram.hpp"

namespace lungsound {

enum class PadPolicy { Smart, Zero, Reflect };

inline PadPolicy parse_pad_policy(const std::string& name) {
    if (name == "smart") return PadPolicy::Smart;
    if (name == "zero") return PadPolicy::Zero;
    if (name == "reflect") return PadPolicy::Reflect;
    throw ConfigError("unknown pad mode '" + name + "'");
}

inline const char* to_string(PadPolicy p) {
    switch (p) {
        case PadPolicy::Smart: return "smart";
        case PadPolicy::Zero: return "zero";
        case PadPolicy::Reflect: return "reflect";
    }
    return "?";
}

struct TrainConfig {
    double target_len_s = 7.0;
    int batch_size = 64;
    double lr_stage1 = 1e-3;
    double lr_stage2 = 1e-4;
    double momentum = 0.9;
    int epochs_stage1 = 200;
    int epochs_stage2 = 50;
    std::uint64_t seed = 0;
    // technique toggles
    bool aug_cba = true;
    bool aug_standard = true;
    bool brc = true;
    PadPolicy pad_policy = PadPolicy::Smart;
    // augmentation application rates; the paper names techniques, not rates
    double cba_prob = 0.5;
    double standard_prob = 0.5;
    double noise_snr_lo = 15.0;
    double noise_snr_hi = 30.0;
    double stop_at_train_acc = 0.0;  // 0 disables early stop
    int workers = 1;
    int device_filter = -1;  // Device index, -1 trains on all
    double val_fraction = 0.1;

    void validate() const {
        if (target_len_s <= 0.0) throw ConfigError("train: target_len_s must be positive");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (lr_stage1 <= 0.0 || lr_stage2 <= 0.0) throw ConfigError("train: learning rates must be positive");
        if (!(0.0 <= momentum && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
        if (epochs_stage1 < 1 || epochs_stage2 < 0) throw ConfigError("train: bad epoch counts");
        if (workers < 1) throw ConfigError("train: workers must be >= 1");
        if (!(0.0 <= val_fraction && val_fraction < 1.0))
            throw ConfigError("train: val_fraction must be in [0, 1)");
    }

    bool operator==(const TrainConfig&) const = default;
};

struct PipelineConfig {
    int target_rate = 4000;
    double band_low = 50.0;
    double band_high = 1800.0;
    int filter_order = 5;
    SpectrogramConfig spectro;
    BlankClipConfig blank;
    AugmentParams aug;
    ArchConfig arch;
    TrainConfig train;
    std::string task = "4class";

    void validate() const {
        if (target_rate <= 0) throw ConfigError("pipeline: target_rate must be positive");
        spectro.validate();
        blank.validate();
        aug.validate();
        arch.validate();
        train.validate();
        if (task != "4class" && task != "2class")
            throw ConfigError("pipeline: task must be 4class or 2class");
        if (task == "2class" && arch.n_classes != 2)
            throw ConfigError("pipeline: 2class task needs n_classes=2");
        if (task == "4class" && arch.n_classes != 4)
            throw ConfigError("pipeline: 4class task needs n_classes=4");
    }

    std::int64_t target_len_samples() const {
        return std::llround(train.target_len_s * target_rate);
    }

    bool operator==(const PipelineConfig&) const = default;
};

// ---- preprocessing chain ----

struct PrepChain {
    int target_rate = 4000;
    FilterCoefficients coeffs;
};

inline PrepChain make_prep_chain(const PipelineConfig& config) {
    PrepChain chain;
    chain.target_rate = config.target_rate;
    chain.coeffs = design_butterworth_bandpass(config.filter_order, config.band_low,
                                               config.band_high, config.target_rate);
    return chain;
}

// resample -> band-pass -> normalize; annotations and identity are preserved.
inline BreathingCycle prep_wave(const PrepChain& chain, const BreathingCycle& cycle) {
    BreathingCycle out = cycle;
    out.samples = normalize(apply_filter(chain.coeffs, resample(cycle.samples, chain.target_rate)));
    return out;
}

struct SampleTrace {
    bool concat = false;
    std::vector<std::int64_t> concat_sources;
    int standard_kind = -1;  // AugKind index, -1 if none
    std::vector<ProvenanceSpan> pad_provenance;
    int brc_rows_removed = 0;
};

using ClassPools = std::array<std::vector<const BreathingCycle*>, kNumClasses>;

inline ClassPools build_class_pools(const std::vector<const BreathingCycle*>& cycles) {
    ClassPools pools;
    for (const BreathingCycle* c : cycles) pools[static_cast<int>(c->label)].push_back(c);
    return pools;
}

// Augment (training only) -> pad to the fixed window -> mel -> blank clip.
// Inputs must already be through prep_wave. rng == nullptr disables
// augmentation and makes the result deterministic.
inline MelSpectrogram assemble_sample(const BreathingCycle& current, const BreathingCycle* prev,
                                      const BreathingCycle* next, const ClassPools* pools,
                                      Rng* rng, const PipelineConfig& config,
                                      SampleTrace* trace = nullptr) {
    const BreathingCycle* cur = &current;
    BreathingCycle scratch;

    if (rng && config.train.aug_cba && pools) {
        const auto& pool = (*pools)[static_cast<int>(current.label)];
        const bool roll = rng->uniform() < config.train.cba_prob;
        if (roll && !pool.empty()) {
            scratch = concat_augment(std::span<const BreathingCycle* const>(pool), *rng);
            cur = &scratch;
            prev = nullptr;
            next = nullptr;
            if (trace) {
                trace->concat = true;
                trace->concat_sources = scratch.sources;
            }
        }
    }
    if (rng && config.train.aug_standard && rng->uniform() < config.train.standard_prob) {
        const AugKind kind = static_cast<AugKind>(rng->uniform_int(0, 3));
        AugmentParams params = config.aug;
        if (kind == AugKind::Noise)
            params.noise_snr_db = rng->uniform(config.train.noise_snr_lo, config.train.noise_snr_hi);
        scratch = standard_augment(*cur, params, kind, *rng);
        cur = &scratch;
        if (trace) trace->standard_kind = static_cast<int>(kind);
    }

    const std::int64_t target_len = config.target_len_samples();
    FixedLengthSample padded;
    switch (config.train.pad_policy) {
        case PadPolicy::Smart: padded = smart_pad(*cur, prev, next, target_len); break;
        case PadPolicy::Zero: padded = pad_baseline(*cur, target_len, PadMode::Zero); break;
        case PadPolicy::Reflect: padded = pad_baseline(*cur, target_len, PadMode::Reflect); break;
    }
    if (trace) trace->pad_provenance = padded.provenance;

    AudioClip clip{std::move(padded.samples), config.target_rate};
    MelSpectrogram mel = mel_spectrogram(clip, config.spectro);
    if (config.train.brc) {
        MelSpectrogram clipped = blank_region_clip(mel, config.blank);
        if (trace) trace->brc_rows_removed = mel.values.rows - clipped.values.rows;
        return clipped;
    }
    return mel;
}

// The spec-level entry point: raw cycle (plus raw neighbors) to model-ready
// grid. Trainers use the prepped-cycle path below to avoid re-filtering.
inline MelSpectrogram preprocess_cycle(const BreathingCycle& cycle, const BreathingCycle* prev,
                                       const BreathingCycle* next, const PipelineConfig& config,
                                       Rng* rng = nullptr, SampleTrace* trace = nullptr) {
    const PrepChain chain = make_prep_chain(config);
    const BreathingCycle cur = prep_wave(chain, cycle);
    BreathingCycle prev_p, next_p;
    if (prev) prev_p = prep_wave(chain, *prev);
    if (next) next_p = prep_wave(chain, *next);
    return assemble_sample(cur, prev ? &prev_p : nullptr, next ? &next_p : nullptr, nullptr, rng,
                           config, trace);
}

// ---- training ----

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_score = std::numeric_limits<double>::quiet_NaN();
};

struct StageOneResult {
    Model model;  // best-validation checkpoint
    int best_epoch = -1;
    double best_score = 0.0;
    std::vector<EpochStats> history;
};

struct DeviceModelSet {
    std::map<Device, Model> models;
    Model fallback;

    Model& for_device(Device d) {
        auto it = models.find(d);
        return it != models.end() ? it->second : fallback;
    }
};

namespace pipeline_detail {

struct PreppedSet {
    std::vector<BreathingCycle> cycles;     // prepped waves
    std::vector<const BreathingCycle*> ptrs;
    std::vector<int> prev_idx, next_idx;    // -1 when absent
    ClassPools pools;
};

inline PreppedSet prep_set(const std::vector<const BreathingCycle*>& cycles, const PrepChain& chain,
                           int workers) {
    PreppedSet set;
    set.cycles.resize(cycles.size());
    auto prep_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) set.cycles[i] = prep_wave(chain, *cycles[i]);
    };
    if (workers <= 1 || cycles.size() < 2) {
        prep_range(0, cycles.size());
    } else {
        std::vector<std::thread> threads;
        const std::size_t chunk = (cycles.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            if (lo >= cycles.size()) break;
            threads.emplace_back(prep_range, lo, std::min(cycles.size(), lo + chunk));
        }
        for (std::thread& t : threads) t.join();
    }
    set.ptrs.reserve(set.cycles.size());
    for (const BreathingCycle& c : set.cycles) set.ptrs.push_back(&c);
    set.prev_idx.assign(set.cycles.size(), -1);
    set.next_idx.assign(set.cycles.size(), -1);
    for (std::size_t i = 0; i < set.cycles.size(); ++i) {
        if (i > 0 && set.cycles[i - 1].meta == set.cycles[i].meta &&
            set.cycles[i - 1].cycle_index + 1 == set.cycles[i].cycle_index)
            set.prev_idx[i] = static_cast<int>(i - 1);
        if (i + 1 < set.cycles.size() && set.cycles[i + 1].meta == set.cycles[i].meta &&
            set.cycles[i].cycle_index + 1 == set.cycles[i + 1].cycle_index)
            set.next_idx[i] = static_cast<int>(i + 1);
    }
    set.pools = build_class_pools(set.ptrs);
    return set;
}

inline int task_label(const std::string& task, ClassLabel label) {
    if (task == "2class") return label == ClassLabel::Normal ? 0 : 1;
    return static_cast<int>(label);
}

inline MelSpectrogram training_sample(const PreppedSet& set, int idx, Rng& rng,
                                      const PipelineConfig& config) {
    const BreathingCycle& cur = set.cycles[idx];
    const BreathingCycle* prev = set.prev_idx[idx] >= 0 ? &set.cycles[set.prev_idx[idx]] : nullptr;
    const BreathingCycle* next = set.next_idx[idx] >= 0 ? &set.cycles[set.next_idx[idx]] : nullptr;
    return assemble_sample(cur, prev, next, &set.pools, &rng, config);
}

inline MelSpectrogram eval_sample(const PreppedSet& set, int idx, const PipelineConfig& config) {
    const BreathingCycle& cur = set.cycles[idx];
    const BreathingCycle* prev = set.prev_idx[idx] >= 0 ? &set.cycles[set.prev_idx[idx]] : nullptr;
    const BreathingCycle* next = set.next_idx[idx] >= 0 ? &set.cycles[set.next_idx[idx]] : nullptr;
    return assemble_sample(cur, prev, next, nullptr, nullptr, config);
}

inline std::vector<Grid> eval_grids(const PreppedSet& set, const PipelineConfig& config,
                                    int workers) {
    std::vector<Grid> grids(set.cycles.size());
    auto run = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            grids[i] = eval_sample(set, static_cast<int>(i), config).values;
    };
    if (workers <= 1 || set.cycles.size() < 2) {
        run(0, set.cycles.size());
    } else {
        std::vector<std::thread> threads;
        const std::size_t chunk = (set.cycles.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            if (lo >= set.cycles.size()) break;
            threads.emplace_back(run, lo, std::min(set.cycles.size(), lo + chunk));
        }
        for (std::thread& t : threads) t.join();
    }
    return grids;
}

// accuracy of the model on already-computed grids
inline double clean_accuracy(Model& model, const std::vector<Grid>& grids,
                             const std::vector<int>& labels) {
    int correct = 0;
    for (std::size_t i = 0; i < grids.size(); ++i)
        if (predict(model, grids[i]) == labels[i]) ++correct;
    return grids.empty() ? 0.0 : static_cast<double>(correct) / grids.size();
}

// validation ICBHI score; falls back to accuracy when a class side is absent
inline double val_score(Model& model, const std::vector<Grid>& grids,
                        const std::vector<int>& labels, int dim) {
    std::vector<int> preds(grids.size());
    for (std::size_t i = 0; i < grids.size(); ++i) preds[i] = predict(model, grids[i]);
    const ConfusionMatrix cm = confusion(preds, labels, dim);
    try {
        return icbhi_score(cm);
    } catch (const UndefinedMetricError&) {
        int correct = 0;
        for (int c = 0; c < dim; ++c) correct += static_cast<int>(cm.at(c, c));
        return static_cast<double>(correct) / static_cast<double>(cm.total());
    }
}

struct TrainLoopOptions {
    int epochs = 1;
    double lr = 1e-3;
    std::uint64_t seed_salt = 0;
    bool select_best = true;  // keep best-val checkpoint; otherwise final
};

struct TrainLoopResult {
    Model model;
    int best_epoch = -1;
    double best_score = 0.0;
    std::vector<EpochStats> history;
};

inline TrainLoopResult train_loop(const Model& init, const PreppedSet& train,
                                  const std::vector<Grid>& val_grids,
                                  const std::vector<int>& val_labels,
                                  const PipelineConfig& config, const TrainLoopOptions& options) {
    TrainLoopResult result;
    result.model = init;
    Model current = init;
    Velocity<float> velocity = zero_gradients(current);

    std::vector<ClassLabel> raw_labels;
    std::vector<int> train_labels;
    for (const BreathingCycle* c : train.ptrs) {
        raw_labels.push_back(c->label);
        train_labels.push_back(task_label(config.task, c->label));
    }
    SamplerWeights weights;
    if (config.task == "2class") {
        // balance the two training classes
        std::array<std::int64_t, 2> counts{};
        for (int l : train_labels) ++counts[l];
        weights.p.reserve(train_labels.size());
        const int k_present = (counts[0] > 0 ? 1 : 0) + (counts[1] > 0 ? 1 : 0);
        for (int l : train_labels)
            weights.p.push_back(1.0 / (static_cast<double>(k_present) * counts[l]));
    } else {
        weights = class_weights(std::span<const ClassLabel>(raw_labels));
    }

    const int n_train = static_cast<int>(train.ptrs.size());
    const bool augmenting = config.train.aug_cba || config.train.aug_standard;
    std::vector<Grid> cached_grids;
    if (!augmenting) cached_grids = eval_grids(train, config, config.train.workers);

    std::vector<Grid> clean_train_grids;
    if (config.train.stop_at_train_acc > 0.0)
        clean_train_grids = augmenting ? eval_grids(train, config, config.train.workers)
                                       : cached_grids;

    const std::uint64_t base_seed = mix64(config.train.seed, options.seed_salt);
    bool best_set = false;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        Rng sampler_rng(mix64(base_seed, 0x5a3full + epoch));
        const std::vector<int> order = weighted_sample(weights, sampler_rng, n_train);

        double loss_sum = 0.0;
        int loss_batches = 0;
        int hits = 0;

        for (int start = 0; start < n_train; start += config.train.batch_size) {
            const int stop = std::min(n_train, start + config.train.batch_size);
            std::vector<Grid> grids(stop - start);
            std::vector<int> labels(stop - start);
            auto build = [&](int lo, int hi) {
                for (int d = lo; d < hi; ++d) {
                    const int idx = order[start + d];
                    labels[d] = train_labels[idx];
                    if (augmenting) {
                        Rng rng(mix64(mix64(base_seed, 0xd4a7ull),
                                      static_cast<std::uint64_t>(epoch) * 1000003ull +
                                          static_cast<std::uint64_t>(start + d)));
                        grids[d] = training_sample(train, idx, rng, config).values;
                    } else {
                        grids[d] = cached_grids[idx];
                    }
                }
            };
            const int count = stop - start;
            if (config.train.workers <= 1 || count < 2) {
                build(0, count);
            } else {
                std::vector<std::thread> threads;
                const int chunk = (count + config.train.workers - 1) / config.train.workers;
                for (int w = 0; w < config.train.workers; ++w) {
                    const int lo = w * chunk;
                    if (lo >= count) break;
                    threads.emplace_back(build, lo, std::min(count, lo + chunk));
                }
                for (std::thread& t : threads) t.join();
            }

            Batch batch = make_batch(std::move(grids), std::move(labels));
            BackwardResult<float> step = backward(current, batch, true);
            sgd_step(current, step.grads, options.lr, config.train.momentum, velocity);
            loss_sum += step.loss;
            ++loss_batches;
            for (std::size_t i = 0; i < batch.labels.size(); ++i) {
                int best = 0;
                for (int c = 1; c < current.config.n_classes; ++c)
                    if (step.probs[i][c] > step.probs[i][best]) best = c;
                if (best == batch.labels[i]) ++hits;
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_batches > 0 ? loss_sum / loss_batches : 0.0;
        stats.train_acc = n_train > 0 ? static_cast<double>(hits) / n_train : 0.0;
        if (!val_grids.empty())
            stats.val_score = val_score(current, val_grids, val_labels, current.config.n_classes == 2 ? 2 : kNumClasses);
        result.history.push_back(stats);

        if (options.select_best && !val_grids.empty()) {
            if (!best_set || stats.val_score > result.best_score) {
                best_set = true;
                result.best_score = stats.val_score;
                result.best_epoch = epoch;
                result.model = current;
            }
        }

        if (config.train.stop_at_train_acc > 0.0) {
            const double acc = clean_accuracy(current, clean_train_grids, train_labels);
            if (acc >= config.train.stop_at_train_acc) break;
        }
    }

    if (!options.select_best || val_grids.empty()) {
        result.model = current;
        result.best_epoch = static_cast<int>(result.history.size()) - 1;
        result.best_score = result.history.empty() ? 0.0 : result.history.back().val_score;
    }
    return result;
}

}  // namespace pipeline_detail

// Stage-1: train on the full train set, track per-epoch validation ICBHI
// score, and keep the highest-validation checkpoint.
inline StageOneResult train_stage1(const std::vector<const BreathingCycle*>& train_cycles,
                                   const std::vector<const BreathingCycle*>& val_cycles,
                                   const PipelineConfig& config) {
    config.validate();
    if (train_cycles.empty()) throw DataError("train_stage1: empty train set");

    std::vector<const BreathingCycle*> train_used = train_cycles;
    if (config.train.device_filter >= 0) {
        const Device d = static_cast<Device>(config.train.device_filter);
        train_used.clear();
        for (const BreathingCycle* c : train_cycles)
            if (c->meta.device == d) train_used.push_back(c);
        if (train_used.empty()) throw DataError("train_stage1: device filter leaves no cycles");
    }

    const PrepChain chain = make_prep_chain(config);
    pipeline_detail::PreppedSet train_set =
        pipeline_detail::prep_set(train_used, chain, config.train.workers);
    pipeline_detail::PreppedSet val_set =
        pipeline_detail::prep_set(val_cycles, chain, config.train.workers);
    const std::vector<Grid> val_grids =
        pipeline_detail::eval_grids(val_set, config, config.train.workers);
    std::vector<int> val_labels;
    for (const BreathingCycle* c : val_set.ptrs)
        val_labels.push_back(pipeline_detail::task_label(config.task, c->label));

    const Model init = build_model<float>(config.arch, config.train.seed);
    pipeline_detail::TrainLoopOptions options;
    options.epochs = config.train.epochs_stage1;
    options.lr = config.train.lr_stage1;
    options.seed_salt = 0x57a6e1ull;
    options.select_best = !val_cycles.empty();

    pipeline_detail::TrainLoopResult r =
        pipeline_detail::train_loop(init, train_set, val_grids, val_labels, config, options);
    return StageOneResult{std::move(r.model), r.best_epoch, r.best_score, std::move(r.history)};
}

// Stage-2: per-device clones of the stage-1 checkpoint, fine-tuned on that
// device's training subset only. Devices with no training data fall back to
// the stage-1 model.
inline DeviceModelSet finetune_stage2(const Model& stage1,
                                      const std::vector<const BreathingCycle*>& train_cycles,
                                      const PipelineConfig& config,
                                      std::map<Device, std::vector<EpochStats>>* histories = nullptr) {
    config.validate();
    DeviceModelSet set;
    set.fallback = stage1;

    const PrepChain chain = make_prep_chain(config);
    auto by_device = device_subsets(train_cycles);
    for (const auto& [device, cycles] : by_device) {
        if (cycles.empty()) continue;
        pipeline_detail::PreppedSet subset =
            pipeline_detail::prep_set(cycles, chain, config.train.workers);
        pipeline_detail::TrainLoopOptions options;
        options.epochs = config.train.epochs_stage2;
        options.lr = config.train.lr_stage2;
        options.seed_salt = mix64(0xf17eull, static_cast<std::uint64_t>(device));
        options.select_best = false;
        pipeline_detail::TrainLoopResult r =
            pipeline_detail::train_loop(stage1, subset, {}, {}, config, options);
        if (histories) (*histories)[device] = r.history;
        set.models.emplace(device, std::move(r.model));
    }
    return set;
}

// Routes every test cycle to its device's model (or the single model),
// deterministically: no augmentation, dropout off.
inline EvalReport evaluate(std::variant<Model*, DeviceModelSet*> models,
                           const std::vector<const BreathingCycle*>& test_cycles,
                           const PipelineConfig& config) {
    config.validate();
    if (test_cycles.empty()) throw DataError("evaluate: empty test set");

    const PrepChain chain = make_prep_chain(config);
    pipeline_detail::PreppedSet test_set =
        pipeline_detail::prep_set(test_cycles, chain, config.train.workers);
    const std::vector<Grid> grids =
        pipeline_detail::eval_grids(test_set, config, config.train.workers);

    std::vector<EvalEntry> entries;
    for (std::size_t i = 0; i < grids.size(); ++i) {
        const Device device = test_set.cycles[i].meta.device;
        Model& model = std::holds_alternative<Model*>(models)
                           ? *std::get<Model*>(models)
                           : std::get<DeviceModelSet*>(models)->for_device(device);
        const int pred = predict(model, grids[i]);
        EvalEntry e;
        e.device = device;
        if (config.task == "2class" && model.config.n_classes == 4) {
            e.truth = pipeline_detail::task_label("2class", test_set.cycles[i].label);
            e.pred = pred == 0 ? 0 : 1;
        } else {
            e.truth = pipeline_detail::task_label(config.task, test_set.cycles[i].label);
            e.pred = pred;
        }
        entries.push_back(e);
    }
    const int dim = config.task == "2class" ? 2 : kNumClasses;
    return assemble_report(entries, config.task, dim);
}

// Carves a patient-wise validation slice out of the train cycles.
inline void carve_validation(const std::vector<const BreathingCycle*>& train_cycles,
                             double val_fraction, std::uint64_t seed,
                             std::vector<const BreathingCycle*>& train_out,
                             std::vector<const BreathingCycle*>& val_out) {
    train_out.clear();
    val_out.clear();
    if (val_fraction <= 0.0) {
        train_out = train_cycles;
        return;
    }
    std::set<int> patients;
    for (const BreathingCycle* c : train_cycles) patients.insert(c->meta.patient_id);
    if (patients.size() < 2) {
        train_out = train_cycles;
        return;
    }
    const SplitSpec carve = patient_split(patients, 1.0 - val_fraction, mix64(seed, 0x7a1ull));
    for (const BreathingCycle* c : train_cycles) {
        if (carve.is_train(c->meta.patient_id))
            train_out.push_back(c);
        else
            val_out.push_back(c);
    }
    if (train_out.empty() || val_out.empty()) {
        train_out = train_cycles;
        val_out.clear();
    }
}

struct SweepRow {
    double length_s = 0.0;
    double score = 0.0;
};

// Table 2-shaped ablation: same splits and seed, varying only the input length.
inline std::vector<SweepRow> input_length_sweep(const std::vector<double>& lengths,
                                                const std::vector<const BreathingCycle*>& train_cycles,
                                                const std::vector<const BreathingCycle*>& val_cycles,
                                                const std::vector<const BreathingCycle*>& test_cycles,
                                                const PipelineConfig& config) {
    const double window_s =
        static_cast<double>(config.spectro.window_len) / config.target_rate;
    std::vector<SweepRow> rows;
    for (double len : lengths) {
        if (len < window_s)
            throw ConfigError("sweep: length " + std::to_string(len) +
                              "s is shorter than the analysis window");
        PipelineConfig c = config;
        c.train.target_len_s = len;
        StageOneResult stage1 = train_stage1(train_cycles, val_cycles, c);
        const EvalReport report = evaluate(&stage1.model, test_cycles, c);
        rows.push_back(SweepRow{len, report.score});
    }
    return rows;
}

}  // namespace lungsound
