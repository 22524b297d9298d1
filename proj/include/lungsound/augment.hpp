#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lungsound/audio.hpp"
#include "lungsound/dataset.hpp"
#include "lungsound/error.hpp"
#include "lungsound/rng.hpp"

namespace lungsound {

struct ProvenanceSpan {
    enum class Kind { Cycle, Zero, Reflect };
    Kind kind = Kind::Cycle;
    std::int64_t source_uid = -1;
    std::int64_t dst_begin = 0;
    std::int64_t dst_end = 0;
    std::int64_t src_begin = 0;
};

// Exactly target_len samples plus a record of where every segment came from.
// Spans tile [0, target_len) without gaps or overlaps.
struct FixedLengthSample {
    std::vector<double> samples;
    int sample_rate = 0;
    ClassLabel label = ClassLabel::Normal;
    std::vector<ProvenanceSpan> provenance;
};

struct AugmentParams {
    double noise_snr_db = 20.0;
    std::pair<double, double> speed_factor_range = {0.9, 1.1};
    double shift_max_s = 1.4;  // 20% of the default 7 s window
    std::pair<double, double> pitch_semitone_range = {-1.0, 1.0};

    void validate() const {
        if (speed_factor_range.first <= 0.0 || speed_factor_range.second <= 0.0)
            throw ConfigError("augment: speed factors must be positive");
        if (!std::isfinite(noise_snr_db)) throw ConfigError("augment: noise SNR must be finite");
        if (shift_max_s < 0.0) throw ConfigError("augment: shift_max_s must be >= 0");
    }

    bool operator==(const AugmentParams&) const = default;
};

enum class AugKind { Noise, Speed, Shift, Pitch };

inline AugKind parse_aug_kind(const std::string& name) {
    if (name == "noise") return AugKind::Noise;
    if (name == "speed") return AugKind::Speed;
    if (name == "shift") return AugKind::Shift;
    if (name == "pitch") return AugKind::Pitch;
    throw ConfigError("augment: unknown kind '" + name + "'");
}

// Draws two cycles from a same-class pool (uniformly, with replacement) and
// concatenates them in draw order.
inline BreathingCycle concat_augment(std::span<const BreathingCycle* const> pool, Rng& rng) {
    if (pool.empty()) throw DataError("concat_augment: empty pool");
    for (const BreathingCycle* c : pool)
        if (c->label != pool[0]->label)
            throw DataError("concat_augment: pool mixes labels");

    const BreathingCycle& a = *pool[rng.below(pool.size())];
    const BreathingCycle& b = *pool[rng.below(pool.size())];

    BreathingCycle out;
    out.samples.sample_rate = a.samples.sample_rate;
    out.samples.samples.reserve(a.samples.samples.size() + b.samples.samples.size());
    out.samples.samples = a.samples.samples;
    out.samples.samples.insert(out.samples.samples.end(), b.samples.samples.begin(),
                               b.samples.samples.end());
    out.label = a.label;
    out.meta = a.meta;
    out.cycle_index = a.cycle_index;
    out.uid = -1;  // synthetic
    out.sources = {a.uid, b.uid};
    return out;
}

inline std::vector<double> circular_shift(const std::vector<double>& x, std::int64_t n) {
    const std::int64_t len = static_cast<std::int64_t>(x.size());
    if (len == 0) return x;
    n = ((n % len) + len) % len;
    std::vector<double> out(x.size());
    for (std::int64_t i = 0; i < len; ++i) out[(i + n) % len] = x[i];
    return out;
}

namespace augment_detail {

inline std::vector<double> restore_length(std::vector<double> v, std::size_t target) {
    if (v.size() > target) {
        v.resize(target);
        return v;
    }
    const std::size_t orig = v.size();
    if (orig == 0) return std::vector<double>(target, 0.0);
    while (v.size() < target) v.push_back(v[v.size() % orig]);
    return v;
}

}  // namespace augment_detail

// Standard audio augmentations; the label is always preserved.
inline BreathingCycle standard_augment(const BreathingCycle& cycle, const AugmentParams& params,
                                       AugKind kind, Rng& rng) {
    params.validate();
    BreathingCycle out = cycle;
    std::vector<double>& x = out.samples.samples;
    const int rate = out.samples.sample_rate;

    switch (kind) {
        case AugKind::Noise: {
            double power = 0.0;
            for (double v : x) power += v * v;
            power /= std::max<std::size_t>(x.size(), 1);
            if (power <= 0.0) break;
            const double sigma = std::sqrt(power / std::pow(10.0, params.noise_snr_db / 10.0));
            for (double& v : x) v += sigma * rng.normal();
            break;
        }
        case AugKind::Speed: {
            const double f = rng.uniform(params.speed_factor_range.first,
                                         params.speed_factor_range.second);
            x = resample_by_ratio(x, 1.0 / f);
            break;
        }
        case AugKind::Shift: {
            const std::int64_t n = std::llround(rng.uniform(0.0, params.shift_max_s) * rate);
            x = circular_shift(x, n);
            break;
        }
        case AugKind::Pitch: {
            // A plain second resample would undo the shift, so length is
            // restored by truncating or wrapping instead.
            const double semis = rng.uniform(params.pitch_semitone_range.first,
                                             params.pitch_semitone_range.second);
            const double f = std::pow(2.0, semis / 12.0);
            const std::size_t orig_len = x.size();
            x = augment_detail::restore_length(resample_by_ratio(x, 1.0 / f), orig_len);
            break;
        }
    }
    return out;
}

namespace augment_detail {

inline bool neighbor_eligible(const BreathingCycle& current, const BreathingCycle* neighbor) {
    return neighbor != nullptr &&
           (neighbor->label == current.label || neighbor->label == ClassLabel::Normal);
}

}  // namespace augment_detail

// Length standardization from the neighboring cycles: the buffer starts as
// [current], appends prev then next when they share the class (or are
// normal), pads with copies of current while short, and keeps the front
// target_len samples.
inline FixedLengthSample smart_pad(const BreathingCycle& current, const BreathingCycle* prev,
                                   const BreathingCycle* next, std::int64_t target_len) {
    if (target_len < 1) throw ConfigError("smart_pad: target_len must be >= 1");
    if (current.samples.samples.empty()) throw DataError("smart_pad: empty cycle");

    std::vector<const BreathingCycle*> segments = {&current};
    std::int64_t have = static_cast<std::int64_t>(current.samples.samples.size());
    if (have < target_len && augment_detail::neighbor_eligible(current, prev)) {
        segments.push_back(prev);
        have += static_cast<std::int64_t>(prev->samples.samples.size());
    }
    if (have < target_len && augment_detail::neighbor_eligible(current, next)) {
        segments.push_back(next);
        have += static_cast<std::int64_t>(next->samples.samples.size());
    }
    while (have < target_len) {
        segments.push_back(&current);
        have += static_cast<std::int64_t>(current.samples.samples.size());
    }

    FixedLengthSample out;
    out.sample_rate = current.samples.sample_rate;
    out.label = current.label;
    out.samples.reserve(target_len);
    std::int64_t filled = 0;
    for (const BreathingCycle* seg : segments) {
        if (filled >= target_len) break;
        const std::int64_t take = std::min<std::int64_t>(
            target_len - filled, static_cast<std::int64_t>(seg->samples.samples.size()));
        out.samples.insert(out.samples.end(), seg->samples.samples.begin(),
                           seg->samples.samples.begin() + take);
        out.provenance.push_back(ProvenanceSpan{ProvenanceSpan::Kind::Cycle, seg->uid, filled,
                                                filled + take, 0});
        filled += take;
    }
    return out;
}

enum class PadMode { Zero, Reflect };

// Baseline padding: trailing zeros, or boundary reflection without edge
// duplication; longer inputs keep the front target_len samples.
inline FixedLengthSample pad_baseline(const BreathingCycle& cycle, std::int64_t target_len,
                                      PadMode mode) {
    if (target_len < 1) throw ConfigError("pad_baseline: target_len must be >= 1");
    const std::vector<double>& x = cycle.samples.samples;
    const std::int64_t n = static_cast<std::int64_t>(x.size());

    FixedLengthSample out;
    out.sample_rate = cycle.samples.sample_rate;
    out.label = cycle.label;
    const std::int64_t take = std::min(n, target_len);
    out.samples.assign(x.begin(), x.begin() + take);
    if (take > 0)
        out.provenance.push_back(
            ProvenanceSpan{ProvenanceSpan::Kind::Cycle, cycle.uid, 0, take, 0});
    if (take == target_len) return out;

    if (mode == PadMode::Zero) {
        out.samples.resize(target_len, 0.0);
        out.provenance.push_back(
            ProvenanceSpan{ProvenanceSpan::Kind::Zero, -1, take, target_len, 0});
        return out;
    }

    // reflect: indices follow a triangle wave with period 2(n-1)
    for (std::int64_t i = take; i < target_len; ++i) {
        std::int64_t idx;
        if (n == 1) {
            idx = 0;
        } else {
            const std::int64_t period = 2 * (n - 1);
            std::int64_t ph = i % period;
            idx = ph < n ? ph : period - ph;
        }
        out.samples.push_back(x[idx]);
    }
    out.provenance.push_back(
        ProvenanceSpan{ProvenanceSpan::Kind::Reflect, cycle.uid, take, target_len, 0});
    return out;
}

// Per-cycle sampling probabilities that draw mini-batches uniformly from each
// represented class: a cycle of class c gets 1 / (K_present * count_c).
struct SamplerWeights {
    std::vector<double> p;
};

inline double cycle_weight(const std::array<std::int64_t, kNumClasses>& counts, ClassLabel label) {
    int k_present = 0;
    for (std::int64_t c : counts)
        if (c > 0) ++k_present;
    if (k_present == 0) throw DataError("class_weights: all class counts are zero");
    const std::int64_t count = counts[static_cast<int>(label)];
    if (count <= 0) throw DataError("class_weights: label has zero count");
    return 1.0 / (static_cast<double>(k_present) * static_cast<double>(count));
}

inline SamplerWeights class_weights(std::span<const ClassLabel> labels) {
    if (labels.empty()) throw DataError("class_weights: no cycles");
    std::array<std::int64_t, kNumClasses> counts{};
    for (ClassLabel l : labels) ++counts[static_cast<int>(l)];
    SamplerWeights w;
    w.p.reserve(labels.size());
    for (ClassLabel l : labels) w.p.push_back(cycle_weight(counts, l));
    return w;
}

// n i.i.d. draws from the categorical distribution given by the weights.
inline std::vector<int> weighted_sample(const SamplerWeights& weights, Rng& rng, int n) {
    if (n < 1) throw ConfigError("weighted_sample: n must be >= 1");
    if (weights.p.empty()) throw DataError("weighted_sample: empty weights");
    std::vector<double> cdf(weights.p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.p.size(); ++i) {
        acc += weights.p[i];
        cdf[i] = acc;
    }
    const double total = acc;
    std::vector<int> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        out.push_back(static_cast<int>(std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1)));
    }
    return out;
}

}  // namespace lungsound
