#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lungsound/bytes.hpp"
#include "lungsound/error.hpp"
#include "lungsound/rng.hpp"
#include "lungsound/spectrogram.hpp"

namespace lungsound {

struct ArchConfig {
    int input_mels = 64;
    std::vector<std::pair<int, int>> conv_stages = {{8, 2}, {16, 2}};  // (channels, stride)
    int res_blocks_per_stage = 1;
    std::vector<int> fc_widths = {128, 128};
    int n_classes = 4;
    double dropout_rate = 0.3;
    bool standardize_input = true;

    void validate() const {
        if (n_classes != 2 && n_classes != 4) throw ConfigError("arch: n_classes must be 2 or 4");
        if (!(0.0 <= dropout_rate && dropout_rate < 1.0))
            throw ConfigError("arch: dropout_rate must be in [0, 1)");
        if (conv_stages.empty()) throw ConfigError("arch: need at least one conv stage");
        for (const auto& [ch, stride] : conv_stages)
            if (ch < 1 || stride < 1) throw ConfigError("arch: bad conv stage");
        if (res_blocks_per_stage < 0) throw ConfigError("arch: res_blocks_per_stage must be >= 0");
        for (int w : fc_widths)
            if (w < 1) throw ConfigError("arch: fc widths must be positive");
    }

    bool operator==(const ArchConfig&) const = default;
};

template <typename T>
struct FeatureMap {
    int ch = 0, h = 0, w = 0;
    std::vector<T> v;

    FeatureMap() = default;
    FeatureMap(int c, int hh, int ww)
        : ch(c), h(hh), w(ww), v(static_cast<std::size_t>(c) * hh * ww, T(0)) {}
    T* plane(int c) { return v.data() + static_cast<std::size_t>(c) * h * w; }
    const T* plane(int c) const { return v.data() + static_cast<std::size_t>(c) * h * w; }
};

template <typename T>
struct ConvLayer {
    int in_ch = 0, out_ch = 0, stride = 1;
    std::vector<T> w;  // [out_ch][in_ch][3][3]
    std::vector<T> b;  // [out_ch]
};

template <typename T>
struct DenseLayer {
    int in_dim = 0, out_dim = 0;
    std::vector<T> w;  // [out_dim][in_dim]
    std::vector<T> b;  // [out_dim]
};

// Conv trunk (stages of strided conv + residual blocks), global average
// pooling, two ReLU+dropout hidden layers, softmax classifier.
template <typename T>
struct Net {
    ArchConfig config;
    std::vector<ConvLayer<T>> convs;  // per stage: entry conv, then 2 convs per res block
    std::vector<DenseLayer<T>> fcs;   // hidden layers + classifier
    std::uint64_t dropout_state = 0;

    int convs_per_stage() const { return 1 + 2 * config.res_blocks_per_stage; }
};

using Model = Net<float>;

struct Batch {
    std::vector<Grid> inputs;       // mel grids, padded to a common frame count
    std::vector<int> labels;        // class indices within n_classes
};

// Pads grids in time to the widest member using each grid's own minimum
// (silence-equivalent) value.
inline Batch make_batch(std::vector<Grid> grids, std::vector<int> labels) {
    if (grids.size() != labels.size()) throw ConfigError("batch: inputs/labels size mismatch");
    int max_cols = 0;
    for (const Grid& g : grids) max_cols = std::max(max_cols, g.cols);
    for (Grid& g : grids) {
        if (g.cols == max_cols) continue;
        float fill = g.v.empty() ? 0.0f : *std::min_element(g.v.begin(), g.v.end());
        Grid padded(g.rows, max_cols);
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < max_cols; ++c) padded.at(r, c) = c < g.cols ? g.at(r, c) : fill;
        }
        g = std::move(padded);
    }
    return Batch{std::move(grids), std::move(labels)};
}

inline std::int64_t param_count(const ArchConfig& config) {
    config.validate();
    std::int64_t n = 0;
    int in_ch = 1;
    for (const auto& [ch, stride] : config.conv_stages) {
        n += static_cast<std::int64_t>(ch) * in_ch * 9 + ch;  // entry conv
        n += config.res_blocks_per_stage * 2 * (static_cast<std::int64_t>(ch) * ch * 9 + ch);
        in_ch = ch;
    }
    int in_dim = in_ch;
    for (int w : config.fc_widths) {
        n += static_cast<std::int64_t>(w) * in_dim + w;
        in_dim = w;
    }
    n += static_cast<std::int64_t>(config.n_classes) * in_dim + config.n_classes;
    return n;
}

namespace model_detail {

template <typename T>
void init_uniform(std::vector<T>& w, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (T& x : w) x = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace model_detail

// Deterministic fan-in-scaled uniform initialization from the seed.
template <typename T>
Net<T> build_model(const ArchConfig& config, std::uint64_t seed) {
    config.validate();
    Net<T> net;
    net.config = config;
    net.dropout_state = mix64(seed, 0xd0d0u);
    Rng rng(mix64(seed, 0x1217u));

    int in_ch = 1;
    for (const auto& [ch, stride] : config.conv_stages) {
        ConvLayer<T> entry{in_ch, ch, stride, std::vector<T>(static_cast<std::size_t>(ch) * in_ch * 9),
                           std::vector<T>(ch, T(0))};
        model_detail::init_uniform(entry.w, in_ch * 9, rng);
        net.convs.push_back(std::move(entry));
        for (int r = 0; r < config.res_blocks_per_stage; ++r) {
            for (int k = 0; k < 2; ++k) {
                ConvLayer<T> conv{ch, ch, 1, std::vector<T>(static_cast<std::size_t>(ch) * ch * 9),
                                  std::vector<T>(ch, T(0))};
                model_detail::init_uniform(conv.w, ch * 9, rng);
                net.convs.push_back(std::move(conv));
            }
        }
        in_ch = ch;
    }

    int in_dim = in_ch;
    for (int width : config.fc_widths) {
        DenseLayer<T> fc{in_dim, width, std::vector<T>(static_cast<std::size_t>(width) * in_dim),
                         std::vector<T>(width, T(0))};
        model_detail::init_uniform(fc.w, in_dim, rng);
        net.fcs.push_back(std::move(fc));
        in_dim = width;
    }
    DenseLayer<T> classifier{in_dim, config.n_classes,
                             std::vector<T>(static_cast<std::size_t>(config.n_classes) * in_dim),
                             std::vector<T>(config.n_classes, T(0))};
    model_detail::init_uniform(classifier.w, in_dim, rng);
    net.fcs.push_back(std::move(classifier));
    return net;
}

namespace model_detail {

template <typename T>
FeatureMap<T> conv_forward(const ConvLayer<T>& layer, const FeatureMap<T>& in) {
    const int s = layer.stride;
    const int ho = (in.h - 1) / s + 1;
    const int wo = (in.w - 1) / s + 1;
    FeatureMap<T> out(layer.out_ch, ho, wo);
    for (int oc = 0; oc < layer.out_ch; ++oc) {
        T* oplane = out.plane(oc);
        const T bias = layer.b[oc];
        for (int i = 0; i < ho * wo; ++i) oplane[i] = bias;
        for (int ic = 0; ic < layer.in_ch; ++ic) {
            const T* iplane = in.plane(ic);
            const T* wblock = layer.w.data() + (static_cast<std::size_t>(oc) * layer.in_ch + ic) * 9;
            for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                    const T wv = wblock[kh * 3 + kw];
                    if (wv == T(0)) continue;
                    const int ow_lo = kw == 0 ? 1 : 0;
                    for (int oh = 0; oh < ho; ++oh) {
                        const int ih = oh * s + kh - 1;
                        if (ih < 0 || ih >= in.h) continue;
                        const T* irow = iplane + static_cast<std::size_t>(ih) * in.w;
                        T* orow = oplane + static_cast<std::size_t>(oh) * wo;
                        const int ow_hi = std::min(wo - 1, (in.w - kw) / s);
                        for (int ow = ow_lo; ow <= ow_hi; ++ow)
                            orow[ow] += wv * irow[ow * s + kw - 1];
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
void conv_backward(const ConvLayer<T>& layer, const FeatureMap<T>& in, const FeatureMap<T>& d_out,
                   FeatureMap<T>& d_in, std::vector<T>& d_w, std::vector<T>& d_b) {
    const int s = layer.stride;
    const int ho = d_out.h, wo = d_out.w;
    for (int oc = 0; oc < layer.out_ch; ++oc) {
        const T* dplane = d_out.plane(oc);
        T acc = T(0);
        for (int i = 0; i < ho * wo; ++i) acc += dplane[i];
        d_b[oc] += acc;
        for (int ic = 0; ic < layer.in_ch; ++ic) {
            const T* iplane = in.plane(ic);
            T* diplane = d_in.plane(ic);
            T* wgrad = d_w.data() + (static_cast<std::size_t>(oc) * layer.in_ch + ic) * 9;
            const T* wblock = layer.w.data() + (static_cast<std::size_t>(oc) * layer.in_ch + ic) * 9;
            for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                    const T wv = wblock[kh * 3 + kw];
                    T wg = T(0);
                    const int ow_lo = kw == 0 ? 1 : 0;
                    for (int oh = 0; oh < ho; ++oh) {
                        const int ih = oh * s + kh - 1;
                        if (ih < 0 || ih >= in.h) continue;
                        const T* irow = iplane + static_cast<std::size_t>(ih) * in.w;
                        T* dirow = diplane + static_cast<std::size_t>(ih) * in.w;
                        const T* drow = dplane + static_cast<std::size_t>(oh) * wo;
                        const int ow_hi = std::min(wo - 1, (in.w - kw) / s);
                        for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                            const int iw = ow * s + kw - 1;
                            wg += drow[ow] * irow[iw];
                            dirow[iw] += wv * drow[ow];
                        }
                    }
                    wgrad[kh * 3 + kw] += wg;
                }
            }
        }
    }
}

template <typename T>
void relu_inplace(FeatureMap<T>& x) {
    for (T& v : x.v) v = v > T(0) ? v : T(0);
}

template <typename T>
struct SampleCache {
    FeatureMap<T> input;                  // standardized input
    std::vector<FeatureMap<T>> pre;       // pre-ReLU output of every conv layer
    std::vector<FeatureMap<T>> act;       // layer inputs (post-ReLU / post-residual)
    std::vector<FeatureMap<T>> res_sums;  // pre-ReLU residual sums per block
};

template <typename T>
struct ForwardCache {
    std::vector<SampleCache<T>> samples;
    std::vector<std::vector<T>> features;    // GAP outputs per sample
    std::vector<std::vector<T>> fc_inputs;   // per dense layer: flattened B x in_dim
    std::vector<std::vector<T>> fc_pre;      // per dense layer: pre-activation
    std::vector<std::vector<T>> drop_masks;  // per hidden layer: scale factors
};

template <typename T>
FeatureMap<T> standardize(const Grid& g, bool enabled) {
    FeatureMap<T> x(1, g.rows, g.cols);
    for (std::size_t i = 0; i < g.v.size(); ++i) x.v[i] = static_cast<T>(g.v[i]);
    if (!enabled) return x;
    double mean = 0.0;
    for (T v : x.v) mean += static_cast<double>(v);
    mean /= static_cast<double>(x.v.size());
    double var = 0.0;
    for (T v : x.v) {
        const double d = static_cast<double>(v) - mean;
        var += d * d;
    }
    var /= static_cast<double>(x.v.size());
    const double inv = 1.0 / std::max(std::sqrt(var), 1e-6);
    for (T& v : x.v) v = static_cast<T>((static_cast<double>(v) - mean) * inv);
    return x;
}

// Conv trunk + GAP for one sample, optionally recording activations.
template <typename T>
std::vector<T> trunk_forward(const Net<T>& net, const Grid& grid, SampleCache<T>* cache) {
    FeatureMap<T> x = standardize<T>(grid, net.config.standardize_input);
    if (cache) cache->input = x;

    int li = 0;
    for (std::size_t stage = 0; stage < net.config.conv_stages.size(); ++stage) {
        if (cache) cache->act.push_back(x);
        FeatureMap<T> z = conv_forward(net.convs[li], x);
        if (cache) cache->pre.push_back(z);
        relu_inplace(z);
        x = std::move(z);
        ++li;
        for (int r = 0; r < net.config.res_blocks_per_stage; ++r) {
            if (cache) cache->act.push_back(x);
            FeatureMap<T> z1 = conv_forward(net.convs[li], x);
            if (cache) cache->pre.push_back(z1);
            FeatureMap<T> a1 = z1;
            relu_inplace(a1);
            ++li;
            if (cache) cache->act.push_back(a1);
            FeatureMap<T> z2 = conv_forward(net.convs[li], a1);
            if (cache) cache->pre.push_back(z2);
            ++li;
            FeatureMap<T> sum = z2;
            for (std::size_t i = 0; i < sum.v.size(); ++i) sum.v[i] += x.v[i];
            if (cache) cache->res_sums.push_back(sum);
            relu_inplace(sum);
            x = std::move(sum);
        }
    }

    const int spatial = x.h * x.w;
    std::vector<T> features(x.ch);
    for (int c = 0; c < x.ch; ++c) {
        T acc = T(0);
        const T* plane = x.plane(c);
        for (int i = 0; i < spatial; ++i) acc += plane[i];
        features[c] = acc / static_cast<T>(spatial);
    }
    return features;
}

}  // namespace model_detail

template <typename T>
struct Gradients {
    std::vector<std::vector<T>> conv_w, conv_b;
    std::vector<std::vector<T>> fc_w, fc_b;
};

template <typename T>
Gradients<T> zero_gradients(const Net<T>& net) {
    Gradients<T> g;
    for (const ConvLayer<T>& c : net.convs) {
        g.conv_w.push_back(std::vector<T>(c.w.size(), T(0)));
        g.conv_b.push_back(std::vector<T>(c.b.size(), T(0)));
    }
    for (const DenseLayer<T>& f : net.fcs) {
        g.fc_w.push_back(std::vector<T>(f.w.size(), T(0)));
        g.fc_b.push_back(std::vector<T>(f.b.size(), T(0)));
    }
    return g;
}

// Class probabilities, one row per batch member; rows sum to 1. Dropout is
// active only when training=true (it consumes the model's dropout stream).
template <typename T>
std::vector<std::vector<T>> forward(Net<T>& net, const Batch& batch, bool training,
                                    model_detail::ForwardCache<T>* cache = nullptr) {
    if (batch.inputs.empty()) throw DataError("forward: empty batch");
    if (batch.inputs.size() != batch.labels.size())
        throw ConfigError("forward: inputs/labels size mismatch");
    const int B = static_cast<int>(batch.inputs.size());
    const int n_hidden = static_cast<int>(net.config.fc_widths.size());

    std::vector<std::vector<T>> features(B);
    if (cache) cache->samples.resize(B);
    for (int i = 0; i < B; ++i) {
        if (batch.inputs[i].rows < 1 || batch.inputs[i].cols < 1)
            throw DataError("forward: empty input grid");
        features[i] = model_detail::trunk_forward(net, batch.inputs[i],
                                                  cache ? &cache->samples[i] : nullptr);
    }
    if (cache) cache->features = features;

    Rng drop_rng(net.dropout_state);
    if (training) net.dropout_state = mix64(net.dropout_state, 0xd70bu);

    std::vector<std::vector<T>> acts = std::move(features);
    for (std::size_t li = 0; li < net.fcs.size(); ++li) {
        const DenseLayer<T>& fc = net.fcs[li];
        std::vector<T> flat_in(static_cast<std::size_t>(B) * fc.in_dim);
        for (int i = 0; i < B; ++i) {
            if (static_cast<int>(acts[i].size()) != fc.in_dim)
                throw ConfigError("forward: feature width mismatch with ArchConfig");
            std::copy(acts[i].begin(), acts[i].end(), flat_in.begin() + static_cast<std::size_t>(i) * fc.in_dim);
        }
        std::vector<T> pre(static_cast<std::size_t>(B) * fc.out_dim);
        for (int i = 0; i < B; ++i) {
            const T* in_row = flat_in.data() + static_cast<std::size_t>(i) * fc.in_dim;
            T* out_row = pre.data() + static_cast<std::size_t>(i) * fc.out_dim;
            for (int o = 0; o < fc.out_dim; ++o) {
                const T* wrow = fc.w.data() + static_cast<std::size_t>(o) * fc.in_dim;
                T acc = fc.b[o];
                for (int k = 0; k < fc.in_dim; ++k) acc += wrow[k] * in_row[k];
                out_row[o] = acc;
            }
        }
        if (cache) {
            cache->fc_inputs.push_back(flat_in);
            cache->fc_pre.push_back(pre);
        }

        const bool hidden = static_cast<int>(li) < n_hidden;
        for (int i = 0; i < B; ++i) acts[i].assign(pre.begin() + static_cast<std::size_t>(i) * fc.out_dim,
                                                   pre.begin() + static_cast<std::size_t>(i + 1) * fc.out_dim);
        if (hidden) {
            for (auto& row : acts)
                for (T& v : row) v = v > T(0) ? v : T(0);
            std::vector<T> mask(static_cast<std::size_t>(B) * fc.out_dim, T(1));
            if (training && net.config.dropout_rate > 0.0) {
                const double keep = 1.0 - net.config.dropout_rate;
                for (T& m : mask) m = drop_rng.uniform() < keep ? static_cast<T>(1.0 / keep) : T(0);
                for (int i = 0; i < B; ++i)
                    for (int o = 0; o < fc.out_dim; ++o)
                        acts[i][o] *= mask[static_cast<std::size_t>(i) * fc.out_dim + o];
            }
            if (cache) cache->drop_masks.push_back(std::move(mask));
        }
    }

    // softmax
    for (auto& row : acts) {
        T mx = row[0];
        for (T v : row) mx = std::max(mx, v);
        T sum = T(0);
        for (T& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (T& v : row) v /= sum;
    }
    return acts;
}

// Mean categorical cross-entropy; probabilities clamped at 1e-12 before log.
template <typename T>
double loss(const std::vector<std::vector<T>>& probs, const std::vector<int>& labels) {
    if (probs.size() != labels.size()) throw ConfigError("loss: size mismatch");
    if (probs.empty()) throw DataError("loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::max(static_cast<double>(probs[i][labels[i]]), 1e-12);
        total += -std::log(p);
    }
    return total / static_cast<double>(probs.size());
}

template <typename T>
struct BackwardResult {
    Gradients<T> grads;
    std::vector<std::vector<T>> probs;
    double loss = 0.0;
};

// Exact gradients of the mean cross-entropy w.r.t. every parameter; the
// dropout mask drawn in the paired forward is reused.
template <typename T>
BackwardResult<T> backward(Net<T>& net, const Batch& batch, bool training = false) {
    model_detail::ForwardCache<T> cache;
    BackwardResult<T> result;
    result.probs = forward(net, batch, training, &cache);
    result.loss = loss(result.probs, batch.labels);
    result.grads = zero_gradients(net);

    const int B = static_cast<int>(batch.inputs.size());
    const int n_hidden = static_cast<int>(net.config.fc_widths.size());
    const int n_fc = static_cast<int>(net.fcs.size());

    // softmax + mean CE: dlogits = (p - onehot) / B
    std::vector<std::vector<T>> delta(B);
    for (int i = 0; i < B; ++i) {
        delta[i] = result.probs[i];
        delta[i][batch.labels[i]] -= T(1);
        for (T& v : delta[i]) v /= static_cast<T>(B);
    }

    for (int li = n_fc - 1; li >= 0; --li) {
        const DenseLayer<T>& fc = net.fcs[li];
        const std::vector<T>& flat_in = cache.fc_inputs[li];
        std::vector<T>& d_w = result.grads.fc_w[li];
        std::vector<T>& d_b = result.grads.fc_b[li];
        std::vector<std::vector<T>> d_in(B, std::vector<T>(fc.in_dim, T(0)));
        for (int i = 0; i < B; ++i) {
            const T* in_row = flat_in.data() + static_cast<std::size_t>(i) * fc.in_dim;
            for (int o = 0; o < fc.out_dim; ++o) {
                const T d = delta[i][o];
                if (d == T(0)) continue;
                d_b[o] += d;
                T* wgrad = d_w.data() + static_cast<std::size_t>(o) * fc.in_dim;
                const T* wrow = fc.w.data() + static_cast<std::size_t>(o) * fc.in_dim;
                for (int k = 0; k < fc.in_dim; ++k) {
                    wgrad[k] += d * in_row[k];
                    d_in[i][k] += d * wrow[k];
                }
            }
        }
        if (li > 0) {
            // back through the previous hidden layer's dropout + ReLU
            const int prev = li - 1;
            const bool prev_hidden = prev < n_hidden;
            delta = std::move(d_in);
            if (prev_hidden) {
                const DenseLayer<T>& pfc = net.fcs[prev];
                const std::vector<T>& mask = cache.drop_masks[prev];
                const std::vector<T>& pre = cache.fc_pre[prev];
                for (int i = 0; i < B; ++i) {
                    for (int o = 0; o < pfc.out_dim; ++o) {
                        const std::size_t idx = static_cast<std::size_t>(i) * pfc.out_dim + o;
                        delta[i][o] *= mask[idx] * (pre[idx] > T(0) ? T(1) : T(0));
                    }
                }
            }
        } else {
            delta = std::move(d_in);  // gradient w.r.t. GAP features
        }
    }

    // conv trunk backward, per sample
    for (int i = 0; i < B; ++i) {
        model_detail::SampleCache<T>& sc = cache.samples[i];
        // last trunk activation = act after final layer; reconstruct its shape
        // from the cached pieces
        const FeatureMap<T>* last_shape;
        if (net.config.res_blocks_per_stage > 0)
            last_shape = &sc.res_sums.back();
        else
            last_shape = &sc.pre.back();
        const int spatial = last_shape->h * last_shape->w;
        FeatureMap<T> d_x(last_shape->ch, last_shape->h, last_shape->w);
        for (int c = 0; c < d_x.ch; ++c) {
            const T g = delta[i][c] / static_cast<T>(spatial);
            T* plane = d_x.plane(c);
            for (int s = 0; s < spatial; ++s) plane[s] = g;
        }

        int li = static_cast<int>(net.convs.size()) - 1;
        int pre_idx = static_cast<int>(sc.pre.size()) - 1;
        int act_idx = static_cast<int>(sc.act.size()) - 1;
        int sum_idx = static_cast<int>(sc.res_sums.size()) - 1;
        for (int stage = static_cast<int>(net.config.conv_stages.size()) - 1; stage >= 0; --stage) {
            for (int r = net.config.res_blocks_per_stage - 1; r >= 0; --r) {
                const FeatureMap<T>& sum = sc.res_sums[sum_idx--];
                for (std::size_t k = 0; k < d_x.v.size(); ++k)
                    if (sum.v[k] <= T(0)) d_x.v[k] = T(0);

                // conv2 of the block
                const FeatureMap<T>& a1 = sc.act[act_idx--];
                const FeatureMap<T>& z2 = sc.pre[pre_idx--];
                (void)z2;
                FeatureMap<T> d_a1(a1.ch, a1.h, a1.w);
                model_detail::conv_backward(net.convs[li], a1, d_x, d_a1,
                                            result.grads.conv_w[li], result.grads.conv_b[li]);
                --li;
                const FeatureMap<T>& z1 = sc.pre[pre_idx--];
                for (std::size_t k = 0; k < d_a1.v.size(); ++k)
                    if (z1.v[k] <= T(0)) d_a1.v[k] = T(0);
                const FeatureMap<T>& block_in = sc.act[act_idx--];
                FeatureMap<T> d_block_in(block_in.ch, block_in.h, block_in.w);
                model_detail::conv_backward(net.convs[li], block_in, d_a1, d_block_in,
                                            result.grads.conv_w[li], result.grads.conv_b[li]);
                --li;
                // skip connection adds straight through
                for (std::size_t k = 0; k < d_x.v.size(); ++k) d_block_in.v[k] += d_x.v[k];
                d_x = std::move(d_block_in);
            }
            // stage entry conv
            const FeatureMap<T>& z = sc.pre[pre_idx--];
            for (std::size_t k = 0; k < d_x.v.size(); ++k)
                if (z.v[k] <= T(0)) d_x.v[k] = T(0);
            const FeatureMap<T>& stage_in = sc.act[act_idx--];
            FeatureMap<T> d_stage_in(stage_in.ch, stage_in.h, stage_in.w);
            model_detail::conv_backward(net.convs[li], stage_in, d_x, d_stage_in,
                                        result.grads.conv_w[li], result.grads.conv_b[li]);
            --li;
            d_x = std::move(d_stage_in);
        }
    }

    return result;
}

template <typename T>
using Velocity = Gradients<T>;

// v <- momentum * v + g;  w <- w - lr * v
template <typename T>
void sgd_step(Net<T>& net, const Gradients<T>& grads, double lr, double momentum,
              Velocity<T>& velocity) {
    if (lr <= 0.0) throw ConfigError("sgd: lr must be positive");
    if (!(0.0 <= momentum && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0, 1)");
    auto update = [&](std::vector<T>& w, const std::vector<T>& g, std::vector<T>& v) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = static_cast<T>(momentum) * v[i] + g[i];
            w[i] -= static_cast<T>(lr) * v[i];
        }
    };
    for (std::size_t i = 0; i < net.convs.size(); ++i) {
        update(net.convs[i].w, grads.conv_w[i], velocity.conv_w[i]);
        update(net.convs[i].b, grads.conv_b[i], velocity.conv_b[i]);
    }
    for (std::size_t i = 0; i < net.fcs.size(); ++i) {
        update(net.fcs[i].w, grads.fc_w[i], velocity.fc_w[i]);
        update(net.fcs[i].b, grads.fc_b[i], velocity.fc_b[i]);
    }
}

template <typename T>
int predict(Net<T>& net, const Grid& grid) {
    Batch b;
    b.inputs = {grid};
    b.labels = {0};
    const auto probs = forward(net, b, false);
    int best = 0;
    for (int c = 1; c < net.config.n_classes; ++c)
        if (probs[0][c] > probs[0][best]) best = c;
    return best;
}

// ---- checkpoint file ----

struct CheckpointMeta {
    std::uint32_t stage = 1;
    std::uint32_t epoch = 0;
    std::uint64_t seed = 0;
};

namespace model_detail {

inline void put_tensor(std::ostream& os, const std::string& name, const std::vector<float>& v) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, v.size());
    for (float x : v) put_f32(os, x);
}

inline std::pair<std::string, std::vector<float>> get_tensor(std::istream& is) {
    const std::uint32_t name_len = get_u32(is, "ckpt.tensor_name_len");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw DataError("ckpt: truncated tensor name");
    const std::uint64_t n = get_u64(is, "ckpt.tensor_size");
    std::vector<float> v(n);
    for (float& x : v) x = get_f32(is, "ckpt.tensor_data");
    return {name, v};
}

}  // namespace model_detail

inline void save_checkpoint(const std::string& path, const Model& net, const Velocity<float>* velocity,
                            const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("ckpt: cannot create file: " + path);
    os.write("LSCKPT\0", 7);
    put_u16(os, 1);
    // architecture
    put_u32(os, static_cast<std::uint32_t>(net.config.input_mels));
    put_u32(os, static_cast<std::uint32_t>(net.config.conv_stages.size()));
    for (const auto& [ch, stride] : net.config.conv_stages) {
        put_u32(os, static_cast<std::uint32_t>(ch));
        put_u32(os, static_cast<std::uint32_t>(stride));
    }
    put_u32(os, static_cast<std::uint32_t>(net.config.res_blocks_per_stage));
    put_u32(os, static_cast<std::uint32_t>(net.config.fc_widths.size()));
    for (int w : net.config.fc_widths) put_u32(os, static_cast<std::uint32_t>(w));
    put_u32(os, static_cast<std::uint32_t>(net.config.n_classes));
    put_f64(os, net.config.dropout_rate);
    put_u16(os, net.config.standardize_input ? 1 : 0);
    // training metadata
    put_u32(os, meta.stage);
    put_u32(os, meta.epoch);
    put_u64(os, meta.seed);
    put_u64(os, net.dropout_state);

    const std::uint32_t n_tensors =
        static_cast<std::uint32_t>((net.convs.size() + net.fcs.size()) * 2 * (velocity ? 2 : 1));
    put_u32(os, n_tensors);
    for (std::size_t i = 0; i < net.convs.size(); ++i) {
        model_detail::put_tensor(os, "conv" + std::to_string(i) + ".w", net.convs[i].w);
        model_detail::put_tensor(os, "conv" + std::to_string(i) + ".b", net.convs[i].b);
    }
    for (std::size_t i = 0; i < net.fcs.size(); ++i) {
        model_detail::put_tensor(os, "fc" + std::to_string(i) + ".w", net.fcs[i].w);
        model_detail::put_tensor(os, "fc" + std::to_string(i) + ".b", net.fcs[i].b);
    }
    if (velocity) {
        for (std::size_t i = 0; i < net.convs.size(); ++i) {
            model_detail::put_tensor(os, "vel.conv" + std::to_string(i) + ".w", velocity->conv_w[i]);
            model_detail::put_tensor(os, "vel.conv" + std::to_string(i) + ".b", velocity->conv_b[i]);
        }
        for (std::size_t i = 0; i < net.fcs.size(); ++i) {
            model_detail::put_tensor(os, "vel.fc" + std::to_string(i) + ".w", velocity->fc_w[i]);
            model_detail::put_tensor(os, "vel.fc" + std::to_string(i) + ".b", velocity->fc_b[i]);
        }
    }
    if (!os) throw DataError("ckpt: write failed: " + path);
}

struct LoadedCheckpoint {
    Model net;
    Velocity<float> velocity;
    bool has_velocity = false;
    CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("ckpt: cannot open file: " + path);
    char magic[7];
    if (!is.read(magic, 7) || std::string(magic, 7) != std::string("LSCKPT\0", 7))
        throw DataError("ckpt: bad magic in " + path);
    if (get_u16(is, "ckpt.version") != 1) throw DataError("ckpt: unsupported version in " + path);

    ArchConfig config;
    config.input_mels = static_cast<int>(get_u32(is, "ckpt.input_mels"));
    const std::uint32_t n_stages = get_u32(is, "ckpt.n_stages");
    config.conv_stages.clear();
    for (std::uint32_t i = 0; i < n_stages; ++i) {
        const int ch = static_cast<int>(get_u32(is, "ckpt.stage_ch"));
        const int stride = static_cast<int>(get_u32(is, "ckpt.stage_stride"));
        config.conv_stages.push_back({ch, stride});
    }
    config.res_blocks_per_stage = static_cast<int>(get_u32(is, "ckpt.res_blocks"));
    const std::uint32_t n_fc = get_u32(is, "ckpt.n_fc");
    config.fc_widths.clear();
    for (std::uint32_t i = 0; i < n_fc; ++i)
        config.fc_widths.push_back(static_cast<int>(get_u32(is, "ckpt.fc_width")));
    config.n_classes = static_cast<int>(get_u32(is, "ckpt.n_classes"));
    config.dropout_rate = get_f64(is, "ckpt.dropout_rate");
    config.standardize_input = get_u16(is, "ckpt.standardize") != 0;

    LoadedCheckpoint out;
    out.meta.stage = get_u32(is, "ckpt.stage");
    out.meta.epoch = get_u32(is, "ckpt.epoch");
    out.meta.seed = get_u64(is, "ckpt.seed");
    const std::uint64_t dropout_state = get_u64(is, "ckpt.dropout_state");

    out.net = build_model<float>(config, 0);
    out.net.dropout_state = dropout_state;
    out.velocity = zero_gradients(out.net);

    const std::uint32_t n_tensors = get_u32(is, "ckpt.n_tensors");
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
        auto [name, data] = model_detail::get_tensor(is);
        const bool vel = name.rfind("vel.", 0) == 0;
        std::string base = vel ? name.substr(4) : name;
        std::vector<float>* dst = nullptr;
        if (base.rfind("conv", 0) == 0) {
            const std::size_t dot = base.find('.');
            const int idx = std::stoi(base.substr(4, dot - 4));
            if (idx < 0 || idx >= static_cast<int>(out.net.convs.size()))
                throw DataError("ckpt: tensor " + name + " out of range");
            const bool is_w = base.substr(dot + 1) == "w";
            dst = vel ? (is_w ? &out.velocity.conv_w[idx] : &out.velocity.conv_b[idx])
                      : (is_w ? &out.net.convs[idx].w : &out.net.convs[idx].b);
        } else if (base.rfind("fc", 0) == 0) {
            const std::size_t dot = base.find('.');
            const int idx = std::stoi(base.substr(2, dot - 2));
            if (idx < 0 || idx >= static_cast<int>(out.net.fcs.size()))
                throw DataError("ckpt: tensor " + name + " out of range");
            const bool is_w = base.substr(dot + 1) == "w";
            dst = vel ? (is_w ? &out.velocity.fc_w[idx] : &out.velocity.fc_b[idx])
                      : (is_w ? &out.net.fcs[idx].w : &out.net.fcs[idx].b);
        } else {
            throw DataError("ckpt: unknown tensor " + name);
        }
        if (dst->size() != data.size())
            throw DataError("ckpt: shape mismatch for tensor " + name + ": file has " +
                            std::to_string(data.size()) + ", model expects " +
                            std::to_string(dst->size()));
        *dst = std::move(data);
        if (vel) out.has_velocity = true;
    }
    return out;
}

}  // namespace lungsound
