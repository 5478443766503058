#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowcls/dataset.hpp"
#include "flowcls/partition.hpp"
#include "flowcls/transforms.hpp"

namespace flowcls::models {

using json = nlohmann::ordered_json;

namespace detail {
struct Builder;
}

enum class ModelKind { tree, forest, knn };

std::string_view to_string(ModelKind k) noexcept;
ModelKind model_kind_from_string(std::string_view s);

/// Row-major feature matrix.
struct FeatureMatrix {
    std::vector<std::string> names;
    std::size_t rows = 0;
    std::vector<double> values;

    std::size_t cols() const noexcept { return names.size(); }
    const double* row(std::size_t r) const { return values.data() + r * names.size(); }
};

/// Every numeric column in schema order. Throws config_error if a
/// categorical column is left (encode it first) and value_error on NaN.
FeatureMatrix feature_matrix(const Dataset& ds);

/// The named columns in the given order; a missing column is a shape_error.
FeatureMatrix feature_matrix(const Dataset& ds, const std::vector<std::string>& names);

struct Prediction {
    std::vector<std::string> classes;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> probabilities;  // aligned with classes
};

class Classifier {
public:
    virtual ~Classifier() = default;

    virtual ModelKind kind() const noexcept = 0;
    const std::vector<std::string>& classes() const noexcept { return classes_; }
    const std::vector<std::string>& features() const noexcept { return features_; }

    /// One probability vector per row; throws shape_error on column mismatch.
    virtual std::vector<std::vector<double>> predict_proba(const FeatureMatrix& x) const = 0;

    Prediction predict(const FeatureMatrix& x) const;
    Prediction predict(const Dataset& ds) const;

    virtual json to_json() const = 0;

protected:
    void check_shape(const FeatureMatrix& x) const;

    std::vector<std::string> classes_;   // sorted
    std::vector<std::string> features_;
};

using ModelPtr = std::shared_ptr<const Classifier>;

struct TreeParams {
    std::size_t max_depth = 0;  // 0 = unlimited
    std::size_t min_samples_split = 2;
    double min_impurity_decrease = 0.0;

    void validate() const;
};

struct TreeNode {
    int feature = -1;  // -1 for a leaf
    double threshold = 0;
    std::size_t left = 0, right = 0;
    double impurity = 0;
    std::size_t samples = 0;
    double decrease = 0;  // impurity decrease of this split (node level)
    std::vector<double> probabilities;
    std::size_t majority = 0;

    bool leaf() const noexcept { return feature < 0; }
};

double gini(const std::vector<std::size_t>& class_counts, std::size_t total);

class DecisionTree final : public Classifier {
public:
    ModelKind kind() const noexcept override { return ModelKind::tree; }
    std::vector<std::vector<double>> predict_proba(const FeatureMatrix& x) const override;
    json to_json() const override;
    static DecisionTree from_json(const json& j);

    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    const TreeParams& params() const noexcept { return params_; }
    /// Per-feature sum of sample-weighted impurity decreases (unnormalized);
    /// empty when the model carries no split bookkeeping.
    const std::vector<double>& impurity_decrease() const noexcept { return importance_; }
    std::size_t depth() const;
    const TreeNode& leaf_for(const double* row) const;

    friend struct detail::Builder;

private:
    TreeParams params_;
    std::vector<TreeNode> nodes_;
    std::vector<double> importance_;
};

/// Greedy CART with Gini; candidate thresholds are midpoints of consecutive
/// distinct values. Ties go to the lowest feature, then the lowest threshold.
DecisionTree fit_tree(const partition::PartitionData& train, const TreeParams& params = {},
                      const std::string& label_column = "label");

struct ForestParams {
    std::size_t n_trees = 100;
    std::size_t m = 0;  // features per split; 0 = ceil(sqrt(feature count))
    bool bootstrap = true;
    TreeParams tree;
    std::uint64_t seed = 42;

    void validate() const;
};

class RandomForest final : public Classifier {
public:
    ModelKind kind() const noexcept override { return ModelKind::forest; }
    std::vector<std::vector<double>> predict_proba(const FeatureMatrix& x) const override;
    json to_json() const override;
    static RandomForest from_json(const json& j);

    const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
    const std::vector<std::uint64_t>& tree_seeds() const noexcept { return seeds_; }
    const std::vector<std::vector<bool>>& oob_masks() const noexcept { return oob_; }
    std::size_t m() const noexcept { return m_; }
    const ForestParams& params() const noexcept { return params_; }

    friend struct detail::Builder;

private:
    ForestParams params_;
    std::size_t m_ = 0;
    std::vector<DecisionTree> trees_;
    std::vector<std::uint64_t> seeds_;
    std::vector<std::vector<bool>> oob_;
};

RandomForest fit_forest(const partition::PartitionData& train, const ForestParams& params = {},
                        const std::string& label_column = "label");

/// Exact brute-force Euclidean k-NN. Features should be scaled beforehand.
class KnnModel final : public Classifier {
public:
    ModelKind kind() const noexcept override { return ModelKind::knn; }
    std::vector<std::vector<double>> predict_proba(const FeatureMatrix& x) const override;
    json to_json() const override;
    static KnnModel from_json(const json& j);

    std::size_t k() const noexcept { return k_; }
    /// Training row indices of the k nearest neighbours of `query`
    /// (distance ties to the lower index).
    std::vector<std::size_t> neighbours(const double* query) const;

    friend struct detail::Builder;

private:
    std::size_t k_ = 1;
    FeatureMatrix train_;
    std::vector<std::size_t> labels_;
};

/// Throws config_error when k is 0 or exceeds the train size.
KnnModel fit_knn(const partition::PartitionData& train, std::size_t k = 5, const std::string& label_column = "label");

/// Fit any model kind from a flat parameter object (keys as in HyperGrid).
ModelPtr fit_model(ModelKind kind, const json& params, const partition::PartitionData& train,
                   std::uint64_t seed = 42, const std::string& label_column = "label");

json model_to_json(const Classifier& model);
ModelPtr model_from_json(const json& j);

/// Parameter names accepted by each model kind.
std::vector<std::string> param_names(ModelKind kind);

struct HyperGrid {
    ModelKind kind = ModelKind::forest;
    std::map<std::string, std::vector<double>> params;
    std::string metric = "macro_f1";
    std::size_t folds = 5;

    void validate() const;
    /// Cartesian product in key order; the last key varies fastest.
    std::vector<json> combinations() const;
};

struct CvRow {
    json params;
    std::vector<double> fold_scores;
    double mean = 0;
    double stdev = 0;  // population standard deviation over folds
};

struct GridResult {
    std::vector<CvRow> table;
    std::size_t best = 0;
    json best_params;
    transforms::FittedChain chain;  // refit on the full design set
    ModelPtr model;                 // refit on the full design set
    std::string design_fingerprint;

    std::string table_csv(const std::string& comment = {}) const;
};

/// k-fold cross-validated grid search over the design set (train+val rows of
/// `design`). Every fold refits `chain_steps` on its own training rows. Ties on
/// the mean score go to the simpler combination. Throws leakage_error when
/// `design` tags any test row.
GridResult grid_search(const Dataset& ds, const partition::SplitAssignment& design, const json& chain_steps,
                       const HyperGrid& grid, std::uint64_t seed = 42, const std::string& label_column = "label",
                       bool allow_temporal = false);

}  // namespace flowcls::models
