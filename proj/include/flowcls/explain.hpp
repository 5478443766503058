#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flowcls/dataset.hpp"
#include "flowcls/models.hpp"

namespace flowcls::explain {

struct ImportanceRow {
    std::string name;                   // feature, or group members joined by '+'
    std::vector<std::string> features;
    double importance = 0;
    double stdev = 0;                   // across repeats (permutation only)
    std::size_t rank = 0;               // 1 = most important
};

struct ImportanceTable {
    std::string method;  // "gini" or "permutation"
    std::string metric;  // permutation scoring metric
    std::size_t repeats = 0;
    double baseline = 0;  // permutation baseline score
    std::vector<ImportanceRow> rows;  // ordered by rank

    const ImportanceRow& row(const std::string& name) const;  // throws value_error
    std::string to_csv(const std::string& comment = {}) const;
    /// Text bar chart, one line per row.
    std::string to_text(std::size_t width = 40) const;
};

/// Normalized total impurity decrease per feature. Forests average their
/// trees' normalized importances. Throws unsupported_model for models
/// without split bookkeeping.
ImportanceTable gini_importance(const models::Classifier& model);

/// Single-linkage groups of features whose |Pearson r| reaches `threshold`.
/// Constant columns are never grouped. Groups keep feature order.
std::vector<std::vector<std::string>> correlation_groups(const Dataset& ds, const std::vector<std::string>& features,
                                                         double threshold = 0.9);

struct PermutationConfig {
    std::string metric = "macro_f1";
    std::size_t repeats = 10;
    std::uint64_t seed = 42;
    bool group_correlated = true;
    double correlation_threshold = 0.9;
    std::vector<std::vector<std::string>> groups;  // explicit groups override correlation grouping

    void validate() const;
};

/// Mean drop of the score when a feature (or group, shuffled with one shared
/// permutation) is permuted. Use a validation partition, not test.
ImportanceTable permutation_importance(const models::Classifier& model, const Dataset& eval_set,
                                       const PermutationConfig& cfg = {}, const std::string& label_column = "label");

struct PartialDependence {
    std::string feature;
    std::vector<double> grid;
    std::vector<std::string> classes;
    std::vector<std::vector<double>> curves;  // [class][grid point]

    std::string to_csv(const std::string& comment = {}) const;
};

/// 20 equally spaced quantiles (0, 1/19, ..., 1) of the column.
std::vector<double> quantile_grid(const std::vector<double>& values, std::size_t points = 20);

/// Average predicted class probabilities with `feature` overwritten by each
/// grid value. An empty grid means the default quantile grid. Throws
/// config_error if the model does not use `feature`.
PartialDependence partial_dependence(const models::Classifier& model, const Dataset& eval_set,
                                     const std::string& feature, std::vector<double> grid = {});

}  // namespace flowcls::explain
