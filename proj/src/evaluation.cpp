#include "flowcls/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

#include "flowcls/dataset.hpp"
#include "flowcls/error.hpp"

namespace flowcls::eval {

namespace {

constexpr std::string_view kModule = "evaluation";

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
    return n;
}

std::size_t ConfusionMatrix::trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
    return n;
}

std::size_t ConfusionMatrix::index_of(std::string_view label) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) {
        throw Error(ErrorKind::value_error, kModule, "unknown class '" + std::string(label) + "'");
    }
    return static_cast<std::size_t>(it - classes.begin());
}

std::size_t ConfusionMatrix::support(std::size_t cls) const {
    return std::accumulate(counts[cls].begin(), counts[cls].end(), std::size_t{0});
}

ConfusionMatrix confusion(std::span<const std::string> actual, std::span<const std::string> predicted,
                          std::span<const std::string> extra_classes) {
    if (actual.size() != predicted.size()) {
        throw Error(ErrorKind::shape_error, kModule,
                    "actual has " + std::to_string(actual.size()) + " labels, predicted has " +
                        std::to_string(predicted.size()));
    }
    if (actual.empty()) throw Error(ErrorKind::shape_error, kModule, "confusion matrix of zero rows");
    std::set<std::string> vocab(actual.begin(), actual.end());
    vocab.insert(predicted.begin(), predicted.end());
    vocab.insert(extra_classes.begin(), extra_classes.end());
    ConfusionMatrix cm;
    cm.classes.assign(vocab.begin(), vocab.end());
    cm.counts.assign(cm.classes.size(), std::vector<std::size_t>(cm.classes.size(), 0));
    for (std::size_t i = 0; i < actual.size(); ++i) ++cm.counts[cm.index_of(actual[i])][cm.index_of(predicted[i])];
    return cm;
}

double accuracy(const ConfusionMatrix& cm) { return ratio(cm.trace(), cm.total()); }

BinaryCounts one_vs_rest(const ConfusionMatrix& cm, std::size_t positive) {
    BinaryCounts c;
    for (std::size_t a = 0; a < cm.size(); ++a) {
        for (std::size_t p = 0; p < cm.size(); ++p) {
            const auto n = cm.counts[a][p];
            if (a == positive && p == positive) c.tp += n;
            else if (a == positive) c.fn += n;
            else if (p == positive) c.fp += n;
            else c.tn += n;
        }
    }
    return c;
}

double f_beta(double precision, double recall, double beta) {
    // any weighted harmonic mean of equal values is that value; keeps micro-F = accuracy exact
    if (precision == recall) return precision;
    const double b2 = beta * beta;
    const double den = b2 * precision + recall;
    return den == 0 ? 0.0 : (1 + b2) * precision * recall / den;
}

BinaryMetrics binary_metrics(const BinaryCounts& c, double beta) {
    BinaryMetrics m;
    m.counts = c;
    if (c.tp + c.fp == 0) m.warnings.push_back("precision undefined (no positive predictions); reported as 0");
    if (c.tp + c.fn == 0) m.warnings.push_back("recall undefined (no positive instances); reported as 0");
    if (c.fp + c.tn == 0) m.warnings.push_back("false positive rate undefined (no negative instances); reported as 0");
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.f_beta = f_beta(m.precision, m.recall, beta);
    if (m.precision == 0 && m.recall == 0) m.warnings.push_back("F-score undefined (precision = recall = 0); reported as 0");
    m.accuracy = ratio(c.tp + c.tn, c.tp + c.fp + c.fn + c.tn);
    m.fpr = ratio(c.fp, c.fp + c.tn);
    return m;
}

BinaryMetrics binary_metrics(const ConfusionMatrix& cm, std::string_view positive, double beta) {
    return binary_metrics(one_vs_rest(cm, cm.index_of(positive)), beta);
}

std::string_view to_string(Aggregation a) noexcept {
    switch (a) {
        case Aggregation::macro: return "macro";
        case Aggregation::weighted: return "weighted";
        case Aggregation::micro: return "micro";
    }
    return "?";
}

double aggregate(const ConfusionMatrix& cm, Metric metric, Aggregation mode, double beta) {
    auto pick = [&](const BinaryMetrics& m) {
        switch (metric) {
            case Metric::precision: return m.precision;
            case Metric::recall: return m.recall;
            case Metric::f_beta: break;
        }
        return m.f_beta;
    };
    if (mode == Aggregation::micro) {
        BinaryCounts pooled;
        for (std::size_t c = 0; c < cm.size(); ++c) {
            auto b = one_vs_rest(cm, c);
            pooled.tp += b.tp;
            pooled.fp += b.fp;
            pooled.fn += b.fn;
            pooled.tn += b.tn;
        }
        return pick(binary_metrics(pooled, beta));
    }
    double sum = 0, weight = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) {
        const double w = mode == Aggregation::macro ? 1.0 : static_cast<double>(cm.support(c));
        sum += w * pick(binary_metrics(one_vs_rest(cm, c), beta));
        weight += w;
    }
    return weight == 0 ? 0.0 : sum / weight;
}

std::vector<std::string> known_metrics() {
    std::vector<std::string> out = {"accuracy"};
    for (const char* mode : {"macro", "weighted", "micro"}) {
        for (const char* m : {"precision", "recall", "f1", "f2"}) out.push_back(std::string(mode) + "_" + m);
    }
    return out;
}

bool is_known_metric(std::string_view name) {
    const auto all = known_metrics();
    return std::find(all.begin(), all.end(), name) != all.end();
}

double score(const ConfusionMatrix& cm, std::string_view name) {
    if (!is_known_metric(name)) throw Error(ErrorKind::config_error, kModule, "unknown metric '" + std::string(name) + "'");
    if (name == "accuracy") return accuracy(cm);
    const auto us = name.find('_');
    const auto mode_s = name.substr(0, us), metric_s = name.substr(us + 1);
    const Aggregation mode = mode_s == "macro" ? Aggregation::macro : mode_s == "weighted" ? Aggregation::weighted
                                                                                             : Aggregation::micro;
    if (metric_s == "precision") return aggregate(cm, Metric::precision, mode);
    if (metric_s == "recall") return aggregate(cm, Metric::recall, mode);
    return aggregate(cm, Metric::f_beta, mode, metric_s == "f2" ? 2.0 : 1.0);
}

RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw Error(ErrorKind::shape_error, kModule, "scores and labels differ in length");
    const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    const std::size_t n_neg = positive.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw Error(ErrorKind::undefined_metric, kModule, "ROC AUC needs at least one positive and one negative");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (positive[order[i]] ? tp : fp)++;
            ++i;
        }
        curve.points.push_back({s, ratio(fp, n_neg), ratio(tp, n_pos)});
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    return curve;
}

MulticlassAuc roc_auc_ovr(const std::vector<std::vector<double>>& probabilities,
                          const std::vector<std::string>& classes, std::span<const std::string> actual) {
    MulticlassAuc out;
    out.classes = classes;
    double sum = 0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<double> s(actual.size());
        std::vector<bool> pos_v(actual.size());
        for (std::size_t r = 0; r < actual.size(); ++r) {
            s[r] = probabilities.at(r).at(c);
            pos_v[r] = actual[r] == classes[c];
        }
        const auto n_pos = static_cast<std::size_t>(std::count(pos_v.begin(), pos_v.end(), true));
        if (n_pos == 0 || n_pos == actual.size()) {
            out.per_class.push_back(std::nan(""));
            continue;
        }
        const double auc = roc_auc(s, pos_v).auc;
        out.per_class.push_back(auc);
        sum += auc;
        ++defined;
    }
    out.macro = defined ? sum / static_cast<double>(defined) : std::nan("");
    return out;
}

MetricReport report(const ConfusionMatrix& cm, const ReportConfig& cfg) {
    MetricReport r;
    r.beta = cfg.beta;
    r.rows = cm.total();
    r.accuracy = accuracy(cm);
    for (std::size_t c = 0; c < cm.size(); ++c) {
        const auto m = binary_metrics(one_vs_rest(cm, c), cfg.beta);
        r.per_class.push_back({cm.classes[c], m.precision, m.recall, m.f_beta, cm.support(c)});
        for (const auto& w : m.warnings) r.warnings.push_back("class '" + cm.classes[c] + "': " + w);
    }
    r.macro_precision = aggregate(cm, Metric::precision, Aggregation::macro, cfg.beta);
    r.macro_recall = aggregate(cm, Metric::recall, Aggregation::macro, cfg.beta);
    r.macro_f = aggregate(cm, Metric::f_beta, Aggregation::macro, cfg.beta);
    r.weighted_precision = aggregate(cm, Metric::precision, Aggregation::weighted, cfg.beta);
    r.weighted_recall = aggregate(cm, Metric::recall, Aggregation::weighted, cfg.beta);
    r.weighted_f = aggregate(cm, Metric::f_beta, Aggregation::weighted, cfg.beta);
    r.micro_precision = aggregate(cm, Metric::precision, Aggregation::micro, cfg.beta);
    r.micro_recall = aggregate(cm, Metric::recall, Aggregation::micro, cfg.beta);
    r.micro_f = aggregate(cm, Metric::f_beta, Aggregation::micro, cfg.beta);

    std::vector<Misclassification> off;
    for (std::size_t a = 0; a < cm.size(); ++a) {
        for (std::size_t p = 0; p < cm.size(); ++p) {
            if (a != p && cm.counts[a][p] > 0) off.push_back({cm.classes[a], cm.classes[p], cm.counts[a][p]});
        }
    }
    std::stable_sort(off.begin(), off.end(), [](const auto& x, const auto& y) { return x.count > y.count; });
    if (off.size() > cfg.top_n) off.resize(cfg.top_n);
    r.top_confusions = std::move(off);
    return r;
}

std::string MetricReport::to_text() const {
    const std::string fb = "F" + format_number(beta);
    std::string out;
    out += "rows: " + std::to_string(rows) + "\n";
    out += "accuracy: " + fmt(accuracy) + "\n\n";
    out += "class                     precision  recall   " + fb + "       support\n";
    for (const auto& c : per_class) {
        char line[160];
        std::snprintf(line, sizeof line, "%-25s %-10s %-8s %-10s %zu\n", c.name.c_str(), fmt(c.precision).c_str(),
                      fmt(c.recall).c_str(), fmt(c.f_beta).c_str(), c.support);
        out += line;
    }
    out += "\n";
    out += "macro-precision: " + fmt(macro_precision) + "  macro-recall: " + fmt(macro_recall) + "  macro-" + fb + ": " +
           fmt(macro_f) + "\n";
    out += "weighted-precision: " + fmt(weighted_precision) + "  weighted-recall: " + fmt(weighted_recall) +
           "  weighted-" + fb + ": " + fmt(weighted_f) + "\n";
    out += "micro-precision: " + fmt(micro_precision) + "  micro-recall: " + fmt(micro_recall) + "  micro-" + fb + ": " +
           fmt(micro_f) + "\n";
    out += "\ntop misclassifications:\n";
    if (top_confusions.empty()) out += "  (none)\n";
    for (const auto& m : top_confusions) {
        out += "  " + m.actual + " -> " + m.predicted + ": " + std::to_string(m.count) + "\n";
    }
    out += "\nconvention: undefined ratios (0/0) are reported as 0\n";
    for (const auto& w : warnings) out += "warning: " + w + "\n";
    return out;
}

std::string MetricReport::to_csv(const std::string& comment) const {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "scope,class,metric,value\n";
    auto row = [&](const std::string& scope, const std::string& cls, const std::string& metric, double v) {
        out += scope + "," + csv_escape(cls) + "," + metric + "," + format_number(v) + "\n";
    };
    const std::string fb = "f" + format_number(beta);
    row("overall", "", "rows", static_cast<double>(rows));
    row("overall", "", "accuracy", accuracy);
    for (const auto& c : per_class) {
        row("class", c.name, "precision", c.precision);
        row("class", c.name, "recall", c.recall);
        row("class", c.name, fb, c.f_beta);
        row("class", c.name, "support", static_cast<double>(c.support));
    }
    row("macro", "", "precision", macro_precision);
    row("macro", "", "recall", macro_recall);
    row("macro", "", fb, macro_f);
    row("weighted", "", "precision", weighted_precision);
    row("weighted", "", "recall", weighted_recall);
    row("weighted", "", fb, weighted_f);
    row("micro", "", "precision", micro_precision);
    row("micro", "", "recall", micro_recall);
    row("micro", "", fb, micro_f);
    for (const auto& m : top_confusions) {
        row("confusion", m.actual + "->" + m.predicted, "count", static_cast<double>(m.count));
    }
    return out;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::string& comment) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "actual\\predicted";
    for (const auto& c : cm.classes) out += "," + csv_escape(c);
    out += "\n";
    for (std::size_t a = 0; a < cm.size(); ++a) {
        out += csv_escape(cm.classes[a]);
        for (auto n : cm.counts[a]) out += "," + std::to_string(n);
        out += "\n";
    }
    return out;
}

std::string roc_csv(const RocCurve& curve, const std::string& comment) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "threshold,fpr,tpr\n";
    for (const auto& p : curve.points) {
        out += (std::isinf(p.threshold) ? std::string("inf") : format_number(p.threshold)) + "," + format_number(p.fpr) +
               "," + format_number(p.tpr) + "\n";
    }
    return out;
}

}  // namespace flowcls::eval
