#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowcls::eval {

struct ConfusionMatrix {
    std::vector<std::string> classes;               // sorted
    std::vector<std::vector<std::size_t>> counts;  // [actual][predicted]

    std::size_t size() const noexcept { return classes.size(); }
    std::size_t total() const;
    std::size_t trace() const;
    std::size_t index_of(std::string_view label) const;  // throws value_error
    std::size_t support(std::size_t cls) const;          // row sum
};

/// Classes are the sorted union of both label sets plus `extra_classes`.
/// Throws shape_error on length mismatch or empty input.
ConfusionMatrix confusion(std::span<const std::string> actual, std::span<const std::string> predicted,
                          std::span<const std::string> extra_classes = {});

double accuracy(const ConfusionMatrix& cm);

/// One-vs-rest counts for one class.
struct BinaryCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};
BinaryCounts one_vs_rest(const ConfusionMatrix& cm, std::size_t positive);

/// Undefined ratios (0/0) are reported as 0; `warnings` names each one.
struct BinaryMetrics {
    double precision = 0, recall = 0, f_beta = 0, accuracy = 0, fpr = 0;
    BinaryCounts counts;
    std::vector<std::string> warnings;
};

BinaryMetrics binary_metrics(const BinaryCounts& c, double beta = 1.0);
BinaryMetrics binary_metrics(const ConfusionMatrix& cm, std::string_view positive, double beta = 1.0);
double f_beta(double precision, double recall, double beta);

enum class Metric { precision, recall, f_beta };
enum class Aggregation { macro, weighted, micro };

std::string_view to_string(Aggregation a) noexcept;

double aggregate(const ConfusionMatrix& cm, Metric metric, Aggregation mode, double beta = 1.0);

/// Scoring names usable by model selection: accuracy and
/// {macro,weighted,micro}_{precision,recall,f1,f2}.
bool is_known_metric(std::string_view name);
std::vector<std::string> known_metrics();
/// Throws config_error for unknown names.
double score(const ConfusionMatrix& cm, std::string_view name);

struct RocPoint {
    double threshold = 0, fpr = 0, tpr = 0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) to (1,1)
    double auc = 0;
};

/// One curve point per distinct score (descending); trapezoidal AUC.
/// Throws undefined_metric unless both classes are present.
RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& positive);

struct MulticlassAuc {
    std::vector<std::string> classes;
    std::vector<double> per_class;  // NaN where the class is absent or universal
    double macro = 0;               // mean over defined classes
};

/// One-vs-rest AUC per class from probability columns aligned with `classes`.
MulticlassAuc roc_auc_ovr(const std::vector<std::vector<double>>& probabilities,
                          const std::vector<std::string>& classes, std::span<const std::string> actual);

struct ClassMetrics {
    std::string name;
    double precision = 0, recall = 0, f_beta = 0;
    std::size_t support = 0;
};

struct Misclassification {
    std::string actual, predicted;
    std::size_t count = 0;
};

struct MetricReport {
    double beta = 1.0;
    std::size_t rows = 0;
    double accuracy = 0;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0, macro_recall = 0, macro_f = 0;
    double weighted_precision = 0, weighted_recall = 0, weighted_f = 0;
    double micro_precision = 0, micro_recall = 0, micro_f = 0;
    std::vector<Misclassification> top_confusions;
    std::vector<std::string> warnings;

    std::string to_text() const;
    /// `scope,class,metric,value` rows.
    std::string to_csv(const std::string& comment = {}) const;
};

struct ReportConfig {
    double beta = 1.0;
    std::size_t top_n = 5;
};

MetricReport report(const ConfusionMatrix& cm, const ReportConfig& cfg = {});

/// `actual\predicted` CSV of the matrix.
std::string confusion_csv(const ConfusionMatrix& cm, const std::string& comment = {});
std::string roc_csv(const RocCurve& curve, const std::string& comment = {});

}  // namespace flowcls::eval
