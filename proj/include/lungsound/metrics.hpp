#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lungsound/dataset.hpp"
#include "lungsound/error.hpp"

namespace lungsound {

// Rows are true classes, columns predicted. dim is 4 (normal, crackle,
// wheeze, both) or 2 (normal, anomalous).
struct ConfusionMatrix {
    int dim = 0;
    std::vector<std::int64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int d) : dim(d), counts(static_cast<std::size_t>(d) * d, 0) {}

    std::int64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * dim + pred]; }
    std::int64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * dim + pred];
    }

    std::int64_t row_total(int truth) const {
        std::int64_t t = 0;
        for (int p = 0; p < dim; ++p) t += at(truth, p);
        return t;
    }

    std::int64_t total() const {
        std::int64_t t = 0;
        for (std::int64_t c : counts) t += c;
        return t;
    }

    // associative merge, for parallel evaluation
    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        if (dim != other.dim) throw ConfigError("confusion: dimension mismatch in merge");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
        return *this;
    }

    friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }

    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths,
                                 int dim) {
    if (preds.size() != truths.size())
        throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(truths.size()) + " truths");
    if (preds.empty()) throw DataError("confusion: empty input");
    ConfusionMatrix cm(dim);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (truths[i] < 0 || truths[i] >= dim || preds[i] < 0 || preds[i] >= dim)
            throw DataError("confusion: label out of range at index " + std::to_string(i));
        ++cm.at(truths[i], preds[i]);
    }
    return cm;
}

inline ConfusionMatrix confusion(const std::vector<ClassLabel>& preds,
                                 const std::vector<ClassLabel>& truths) {
    std::vector<int> p(preds.size()), t(truths.size());
    for (std::size_t i = 0; i < preds.size(); ++i) p[i] = static_cast<int>(preds[i]);
    for (std::size_t i = 0; i < truths.size(); ++i) t[i] = static_cast<int>(truths[i]);
    return confusion(p, t, kNumClasses);
}

// S_e = sum of abnormal diagonal / sum of abnormal row totals.
inline double sensitivity(const ConfusionMatrix& cm) {
    std::int64_t correct = 0, total = 0;
    for (int c = 1; c < cm.dim; ++c) {
        correct += cm.at(c, c);
        total += cm.row_total(c);
    }
    if (total == 0) throw UndefinedMetricError("sensitivity: no abnormal samples");
    return static_cast<double>(correct) / static_cast<double>(total);
}

// S_p = normal diagonal / normal row total.
inline double specificity(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.row_total(0);
    if (total == 0) throw UndefinedMetricError("specificity: no normal samples");
    return static_cast<double>(cm.at(0, 0)) / static_cast<double>(total);
}

inline double icbhi_score_from(double se, double sp) { return (se + sp) / 2.0; }

inline double icbhi_score(const ConfusionMatrix& cm) {
    return icbhi_score_from(sensitivity(cm), specificity(cm));
}

// Merges {crackle, wheeze, both} into one anomalous class; any
// abnormal-to-abnormal prediction counts as correct.
inline ConfusionMatrix collapse_2class(const ConfusionMatrix& cm) {
    if (cm.dim != kNumClasses) throw ConfigError("collapse_2class: expected a 4x4 matrix");
    ConfusionMatrix out(2);
    for (int t = 0; t < cm.dim; ++t) {
        for (int p = 0; p < cm.dim; ++p) {
            out.at(t == 0 ? 0 : 1, p == 0 ? 0 : 1) += cm.at(t, p);
        }
    }
    return out;
}

// diagonal / row total per class; zero-count classes are absent from the map.
inline std::map<int, double> per_class_accuracy(const ConfusionMatrix& cm) {
    std::map<int, double> out;
    for (int c = 0; c < cm.dim; ++c) {
        const std::int64_t total = cm.row_total(c);
        if (total > 0) out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(total);
    }
    return out;
}

struct DeviceEval {
    ConfusionMatrix matrix;
    std::optional<double> se, sp, score;
    std::map<int, double> per_class;
    std::int64_t n = 0;
};

struct EvalReport {
    std::string task;  // "4class" or "2class"
    ConfusionMatrix matrix;
    double se = 0.0, sp = 0.0, score = 0.0;
    std::map<Device, DeviceEval> per_device;
    std::map<int, double> per_class;
};

struct EvalEntry {
    int truth = 0;
    int pred = 0;
    Device device = Device::AKGC417L;
};

inline EvalReport assemble_report(const std::vector<EvalEntry>& entries, const std::string& task,
                                  int dim) {
    if (entries.empty()) throw DataError("report: no evaluation entries");
    EvalReport report;
    report.task = task;
    report.matrix = ConfusionMatrix(dim);
    std::map<Device, ConfusionMatrix> device_cms;
    for (const EvalEntry& e : entries) {
        ++report.matrix.at(e.truth, e.pred);
        auto [it, inserted] = device_cms.try_emplace(e.device, dim);
        ++it->second.at(e.truth, e.pred);
    }
    report.se = sensitivity(report.matrix);
    report.sp = specificity(report.matrix);
    report.score = icbhi_score_from(report.se, report.sp);
    report.per_class = per_class_accuracy(report.matrix);
    for (auto& [device, cm] : device_cms) {
        DeviceEval d;
        d.matrix = cm;
        d.n = cm.total();
        try {
            d.se = sensitivity(cm);
        } catch (const UndefinedMetricError&) {}
        try {
            d.sp = specificity(cm);
        } catch (const UndefinedMetricError&) {}
        if (d.se && d.sp) d.score = icbhi_score_from(*d.se, *d.sp);
        d.per_class = per_class_accuracy(cm);
        report.per_device[device] = std::move(d);
    }
    return report;
}

// Percent with one decimal, rounded half-up; formatting only, the stored
// values stay exact.
inline std::string format_pct(double fraction) {
    const double pct = fraction * 100.0;
    const double rounded = std::floor(pct * 10.0 + 0.5) / 10.0;
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << rounded << "%";
    return os.str();
}

inline std::string class_name(const std::string& task, int index) {
    if (task == "2class") return index == 0 ? "normal" : "anomalous";
    return to_string(static_cast<ClassLabel>(index));
}

// Plain-text tables in the challenge layout: Sp, Se, Score columns.
inline std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    os << "task\tSp\tSe\tScore\n";
    os << report.task << '\t' << format_pct(report.sp) << '\t' << format_pct(report.se) << '\t'
       << format_pct(report.score) << '\n';
    os << "\nconfusion (rows true, cols predicted)\n";
    for (int t = 0; t < report.matrix.dim; ++t) {
        os << class_name(report.task, t);
        for (int p = 0; p < report.matrix.dim; ++p) os << '\t' << report.matrix.at(t, p);
        os << '\n';
    }
    os << "\nper-class accuracy\n";
    for (const auto& [cls, acc] : report.per_class)
        os << class_name(report.task, cls) << '\t' << format_pct(acc) << '\n';
    if (!report.per_device.empty()) {
        os << "\ndevice\tn\tSp\tSe\tScore\n";
        for (const auto& [device, d] : report.per_device) {
            os << to_string(device) << '\t' << d.n << '\t'
               << (d.sp ? format_pct(*d.sp) : std::string("-")) << '\t'
               << (d.se ? format_pct(*d.se) : std::string("-")) << '\t'
               << (d.score ? format_pct(*d.score) : std::string("-")) << '\n';
        }
    }
    return os.str();
}

}  // namespace lungsound
