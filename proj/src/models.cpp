#include "flowcls/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "flowcls/error.hpp"
#include "flowcls/evaluation.hpp"
#include "flowcls/hash.hpp"
#include "flowcls/version.hpp"

namespace flowcls::models {

namespace {

constexpr std::string_view kModule = "models";
// Splits whose impurity decrease is below this are treated as zero-gain
// (guards against rounding noise on uninformative splits).
constexpr double kZeroGain = 1e-12;

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, kModule, msg); }

std::size_t argmax(const std::vector<double>& p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) best = i;
    }
    return best;
}

/// Sorted class vocabulary and per-row class ids of the label column.
std::pair<std::vector<std::string>, std::vector<std::size_t>> encode_labels(const Dataset& ds,
                                                                            const std::string& label_column) {
    if (!ds.has(label_column)) fail(ErrorKind::config_error, "label column '" + label_column + "' not found");
    const auto& labels = ds.text(label_column);
    std::set<std::string> vocab(labels.begin(), labels.end());
    std::vector<std::string> classes(vocab.begin(), vocab.end());
    std::vector<std::size_t> ids(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r].empty()) fail(ErrorKind::value_error, "row " + std::to_string(r) + " has an empty label");
        ids[r] = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), labels[r]) - classes.begin());
    }
    return {std::move(classes), std::move(ids)};
}

void check_finite(const FeatureMatrix& x) {
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        if (!std::isfinite(x.values[i])) {
            const auto r = i / x.cols(), c = i % x.cols();
            fail(ErrorKind::value_error, "feature '" + x.names[c] + "' is missing or non-finite at row " + std::to_string(r));
        }
    }
}

std::size_t as_count(const json& params, const char* key, std::size_t fallback) {
    if (!params.contains(key)) return fallback;
    const auto& v = params.at(key);
    if (!v.is_number()) fail(ErrorKind::config_error, std::string("parameter '") + key + "' must be a number");
    const double d = v.get<double>();
    if (d < 0 || d != std::floor(d)) {
        fail(ErrorKind::config_error, std::string("parameter '") + key + "' must be a non-negative integer");
    }
    return static_cast<std::size_t>(d);
}

double as_number(const json& params, const char* key, double fallback) {
    if (!params.contains(key)) return fallback;
    const auto& v = params.at(key);
    if (!v.is_number()) fail(ErrorKind::config_error, std::string("parameter '") + key + "' must be a number");
    return v.get<double>();
}

bool as_flag(const json& params, const char* key, bool fallback) {
    if (!params.contains(key)) return fallback;
    const auto& v = params.at(key);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number()) return v.get<double>() != 0;
    fail(ErrorKind::config_error, std::string("parameter '") + key + "' must be boolean or 0/1");
}

}  // namespace

std::string_view to_string(ModelKind k) noexcept {
    switch (k) {
        case ModelKind::tree: return "tree";
        case ModelKind::forest: return "forest";
        case ModelKind::knn: return "knn";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
    if (s == "tree" || s == "decision_tree") return ModelKind::tree;
    if (s == "forest" || s == "random_forest") return ModelKind::forest;
    if (s == "knn") return ModelKind::knn;
    fail(ErrorKind::config_error, "unknown model kind '" + std::string(s) + "' (expected tree, forest or knn)");
}

FeatureMatrix feature_matrix(const Dataset& ds) {
    std::vector<std::string> names;
    std::vector<std::string> categorical;
    for (const auto& c : ds.columns()) {
        if (c.spec.kind == ColumnKind::numeric) names.push_back(c.spec.name);
        if (c.spec.kind == ColumnKind::categorical) categorical.push_back(c.spec.name);
    }
    if (!categorical.empty()) {
        std::string list;
        for (const auto& n : categorical) list += (list.empty() ? "" : ", ") + n;
        fail(ErrorKind::config_error, "categorical columns must be encoded before modelling: " + list);
    }
    if (names.empty()) fail(ErrorKind::config_error, "dataset has no numeric feature columns");
    return feature_matrix(ds, names);
}

FeatureMatrix feature_matrix(const Dataset& ds, const std::vector<std::string>& names) {
    FeatureMatrix x;
    x.names = names;
    x.rows = ds.rows();
    x.values.resize(x.rows * names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (!ds.has(names[c])) fail(ErrorKind::shape_error, "feature column '" + names[c] + "' is missing");
        const auto& col = ds.column(names[c]);
        if (col.spec.kind != ColumnKind::numeric) {
            fail(ErrorKind::shape_error, "feature column '" + names[c] + "' is not numeric");
        }
        for (std::size_t r = 0; r < x.rows; ++r) x.values[r * names.size() + c] = col.numbers[r];
    }
    check_finite(x);
    return x;
}

void Classifier::check_shape(const FeatureMatrix& x) const {
    if (x.names != features_) {
        fail(ErrorKind::shape_error, "model expects " + std::to_string(features_.size()) + " features, input has " +
                                         std::to_string(x.names.size()) + " (or a different order)");
    }
}

Prediction Classifier::predict(const FeatureMatrix& x) const {
    Prediction p;
    p.classes = classes_;
    p.probabilities = predict_proba(x);
    p.labels.reserve(x.rows);
    for (const auto& pr : p.probabilities) p.labels.push_back(classes_[argmax(pr)]);
    return p;
}

Prediction Classifier::predict(const Dataset& ds) const { return predict(feature_matrix(ds, features_)); }

void TreeParams::validate() const {
    if (min_samples_split < 2) fail(ErrorKind::config_error, "min_samples_split must be at least 2");
    if (!(min_impurity_decrease >= 0)) fail(ErrorKind::config_error, "min_impurity_decrease must be non-negative");
}

void ForestParams::validate() const {
    tree.validate();
    if (n_trees < 1) fail(ErrorKind::config_error, "n_trees must be at least 1");
}

double gini(const std::vector<std::size_t>& class_counts, std::size_t total) {
    if (total == 0) return 0.0;
    double sum_sq = 0;
    for (auto c : class_counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

namespace detail {

struct Builder {
    const FeatureMatrix& x;
    const std::vector<std::size_t>& y;
    std::size_t n_classes;
    const TreeParams& params;
    std::size_t m;  // features considered per split
    std::mt19937_64* rng;
    DecisionTree tree;
    double root_samples = 0;

    struct Split {
        int feature = -1;
        double threshold = 0;
        double decrease = 0;
    };

    std::vector<std::size_t> candidate_features() {
        const std::size_t p = x.cols();
        std::vector<std::size_t> f(p);
        std::iota(f.begin(), f.end(), 0);
        if (m >= p || rng == nullptr) return f;
        for (std::size_t i = 0; i < m; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, p - 1);
            std::swap(f[i], f[pick(*rng)]);
        }
        f.resize(m);
        std::sort(f.begin(), f.end());
        return f;
    }

    Split best_split(const std::vector<std::size_t>& idx, const std::vector<std::size_t>& counts, double parent) {
        Split best;
        const std::size_t n = idx.size();
        std::vector<std::pair<double, std::size_t>> vals(n);
        std::vector<std::size_t> left(n_classes), right(n_classes);
        for (std::size_t f : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i) vals[i] = {x.row(idx[i])[f], y[idx[i]]};
            std::sort(vals.begin(), vals.end());
            std::fill(left.begin(), left.end(), 0);
            right = counts;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                ++left[vals[i].second];
                --right[vals[i].second];
                const double a = vals[i].first, b = vals[i + 1].first;
                if (!(a < b)) continue;
                const std::size_t nl = i + 1, nr = n - nl;
                const double weighted =
                    (static_cast<double>(nl) * gini(left, nl) + static_cast<double>(nr) * gini(right, nr)) /
                    static_cast<double>(n);
                const double dec = parent - weighted;
                if (dec > best.decrease) {
                    double t = a + (b - a) / 2.0;
                    if (!(t < b)) t = a;
                    best = {static_cast<int>(f), t, dec};
                }
            }
        }
        return best;
    }

    std::size_t grow(const std::vector<std::size_t>& idx, std::size_t depth) {
        const std::size_t id = tree.nodes_.size();
        tree.nodes_.emplace_back();
        std::vector<std::size_t> counts(n_classes, 0);
        for (auto i : idx) ++counts[y[i]];
        {
            auto& node = tree.nodes_[id];
            node.samples = idx.size();
            node.impurity = gini(counts, idx.size());
            node.probabilities.resize(n_classes);
            for (std::size_t c = 0; c < n_classes; ++c) {
                node.probabilities[c] = static_cast<double>(counts[c]) / static_cast<double>(idx.size());
            }
            node.majority = argmax(node.probabilities);
        }
        const double impurity = tree.nodes_[id].impurity;
        const bool stop = impurity == 0.0 || idx.size() < params.min_samples_split ||
                          (params.max_depth > 0 && depth >= params.max_depth);
        if (stop) return id;
        const Split s = best_split(idx, counts, impurity);
        if (s.feature < 0 || s.decrease <= kZeroGain || s.decrease < params.min_impurity_decrease) return id;

        std::vector<std::size_t> li, ri;
        for (auto i : idx) (x.row(i)[s.feature] <= s.threshold ? li : ri).push_back(i);
        tree.importance_[static_cast<std::size_t>(s.feature)] +=
            static_cast<double>(idx.size()) / root_samples * s.decrease;
        const std::size_t l = grow(li, depth + 1);
        const std::size_t r = grow(ri, depth + 1);
        auto& node = tree.nodes_[id];
        node.feature = s.feature;
        node.threshold = s.threshold;
        node.decrease = s.decrease;
        node.left = l;
        node.right = r;
        return id;
    }

    static DecisionTree fit(const FeatureMatrix& x, const std::vector<std::size_t>& y,
                            const std::vector<std::string>& classes, const std::vector<std::size_t>& sample,
                            const TreeParams& params, std::size_t m, std::mt19937_64* rng) {
        Builder b{x, y, classes.size(), params, m, rng, {}, static_cast<double>(sample.size())};
        b.tree.params_ = params;
        b.tree.classes_ = classes;
        b.tree.features_ = x.names;
        b.tree.importance_.assign(x.cols(), 0.0);
        b.grow(sample, 0);
        return std::move(b.tree);
    }

    static RandomForest forest(const FeatureMatrix& x, const std::vector<std::size_t>& y,
                               const std::vector<std::string>& classes, const ForestParams& params) {
        RandomForest f;
        f.params_ = params;
        f.classes_ = classes;
        f.features_ = x.names;
        const std::size_t p = x.cols();
        f.m_ = params.m == 0 ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p)))) : params.m;
        if (f.m_ < 1 || f.m_ > p) {
            fail(ErrorKind::config_error, "m must be in [1, " + std::to_string(p) + "], got " + std::to_string(f.m_));
        }
        f.params_.m = f.m_;
        std::mt19937_64 master(params.seed);
        const std::size_t n = x.rows;
        for (std::size_t t = 0; t < params.n_trees; ++t) {
            const std::uint64_t seed = master();
            std::mt19937_64 rng(seed);
            std::vector<std::size_t> sample(n);
            std::vector<bool> oob(n, true);
            if (params.bootstrap) {
                std::uniform_int_distribution<std::size_t> draw(0, n - 1);
                for (auto& s : sample) {
                    s = draw(rng);
                    oob[s] = false;
                }
            } else {
                std::iota(sample.begin(), sample.end(), 0);
                oob.assign(n, false);
            }
            f.trees_.push_back(fit(x, y, classes, sample, params.tree, f.m_, &rng));
            f.seeds_.push_back(seed);
            f.oob_.push_back(std::move(oob));
        }
        return f;
    }

    static KnnModel knn(FeatureMatrix x, std::vector<std::size_t> y, const std::vector<std::string>& classes,
                        std::size_t k) {
        KnnModel model;
        model.classes_ = classes;
        model.features_ = x.names;
        model.k_ = k;
        model.train_ = std::move(x);
        model.labels_ = std::move(y);
        return model;
    }

    static json node_json(const DecisionTree& t, std::size_t id) {
        const auto& n = t.nodes_[id];
        json j;
        j["samples"] = n.samples;
        j["impurity"] = n.impurity;
        j["probabilities"] = n.probabilities;
        if (!n.leaf()) {
            j["feature"] = n.feature;
            j["feature_name"] = t.features_[static_cast<std::size_t>(n.feature)];
            j["threshold"] = n.threshold;
            j["decrease"] = n.decrease;
            j["left"] = node_json(t, n.left);
            j["right"] = node_json(t, n.right);
        }
        return j;
    }

    static std::size_t node_from_json(DecisionTree& t, const json& j) {
        const std::size_t id = t.nodes_.size();
        t.nodes_.emplace_back();
        TreeNode n;
        n.samples = j.at("samples").get<std::size_t>();
        n.impurity = j.at("impurity").get<double>();
        n.probabilities = j.at("probabilities").get<std::vector<double>>();
        if (n.probabilities.size() != t.classes_.size()) fail(ErrorKind::shape_error, "node probability length mismatch");
        n.majority = argmax(n.probabilities);
        if (j.contains("feature")) {
            n.feature = j.at("feature").get<int>();
            if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= t.features_.size()) {
                fail(ErrorKind::shape_error, "node feature index out of range");
            }
            n.threshold = j.at("threshold").get<double>();
            n.decrease = j.value("decrease", 0.0);
            n.left = node_from_json(t, j.at("left"));
            n.right = node_from_json(t, j.at("right"));
        }
        t.nodes_[id] = std::move(n);
        return id;
    }

    static DecisionTree tree_from_json(const json& j) {
        DecisionTree t;
        t.classes_ = j.at("classes").get<std::vector<std::string>>();
        t.features_ = j.at("features").get<std::vector<std::string>>();
        const auto& p = j.at("params");
        t.params_.max_depth = p.at("max_depth").get<std::size_t>();
        t.params_.min_samples_split = p.at("min_samples_split").get<std::size_t>();
        t.params_.min_impurity_decrease = p.at("min_impurity_decrease").get<double>();
        if (j.contains("impurity_decrease")) t.importance_ = j.at("impurity_decrease").get<std::vector<double>>();
        node_from_json(t, j.at("root"));
        return t;
    }

    static RandomForest forest_from_json(const json& j) {
        RandomForest f;
        f.classes_ = j.at("classes").get<std::vector<std::string>>();
        f.features_ = j.at("features").get<std::vector<std::string>>();
        const auto& p = j.at("params");
        f.params_.n_trees = p.at("n_trees").get<std::size_t>();
        f.params_.m = p.at("m").get<std::size_t>();
        f.params_.bootstrap = p.at("bootstrap").get<bool>();
        f.params_.seed = p.at("seed").get<std::uint64_t>();
        f.params_.tree.max_depth = p.at("max_depth").get<std::size_t>();
        f.params_.tree.min_samples_split = p.at("min_samples_split").get<std::size_t>();
        f.params_.tree.min_impurity_decrease = p.at("min_impurity_decrease").get<double>();
        f.m_ = f.params_.m;
        f.seeds_ = j.at("tree_seeds").get<std::vector<std::uint64_t>>();
        const std::size_t n = j.at("train_rows").get<std::size_t>();
        for (const auto& rows : j.at("oob_rows")) {
            std::vector<bool> mask(n, false);
            for (auto r : rows.get<std::vector<std::size_t>>()) mask.at(r) = true;
            f.oob_.push_back(std::move(mask));
        }
        for (const auto& t : j.at("trees")) {
            json full = t;
            full["classes"] = f.classes_;
            full["features"] = f.features_;
            f.trees_.push_back(tree_from_json(full));
        }
        if (f.trees_.empty()) fail(ErrorKind::shape_error, "forest has no trees");
        return f;
    }

    static KnnModel knn_from_json(const json& j) {
        KnnModel model;
        model.classes_ = j.at("classes").get<std::vector<std::string>>();
        model.features_ = j.at("features").get<std::vector<std::string>>();
        model.k_ = j.at("k").get<std::size_t>();
        model.train_.names = model.features_;
        for (const auto& row : j.at("matrix")) {
            const auto v = row.get<std::vector<double>>();
            if (v.size() != model.features_.size()) fail(ErrorKind::shape_error, "k-NN matrix row has wrong width");
            model.train_.values.insert(model.train_.values.end(), v.begin(), v.end());
            ++model.train_.rows;
        }
        model.labels_ = j.at("labels").get<std::vector<std::size_t>>();
        if (model.labels_.size() != model.train_.rows) fail(ErrorKind::shape_error, "k-NN label count mismatch");
        return model;
    }
};

}  // namespace detail

// ---- decision tree ---------------------------------------------------------

const TreeNode& DecisionTree::leaf_for(const double* row) const {
    std::size_t id = 0;
    while (!nodes_[id].leaf()) {
        const auto& n = nodes_[id];
        id = row[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes_[id];
}

std::vector<std::vector<double>> DecisionTree::predict_proba(const FeatureMatrix& x) const {
    check_shape(x);
    std::vector<std::vector<double>> out;
    out.reserve(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out.push_back(leaf_for(x.row(r)).probabilities);
    return out;
}

std::size_t DecisionTree::depth() const {
    std::function<std::size_t(std::size_t)> walk = [&](std::size_t id) -> std::size_t {
        const auto& n = nodes_[id];
        return n.leaf() ? 0 : 1 + std::max(walk(n.left), walk(n.right));
    };
    return nodes_.empty() ? 0 : walk(0);
}

json DecisionTree::to_json() const {
    json j;
    j["kind"] = "tree";
    j["version"] = kToolVersion;
    j["classes"] = classes_;
    j["features"] = features_;
    j["params"] = {{"max_depth", params_.max_depth},
                   {"min_samples_split", params_.min_samples_split},
                   {"min_impurity_decrease", params_.min_impurity_decrease}};
    if (!importance_.empty()) j["impurity_decrease"] = importance_;
    j["root"] = detail::Builder::node_json(*this, 0);
    return j;
}

DecisionTree DecisionTree::from_json(const json& j) { return detail::Builder::tree_from_json(j); }

DecisionTree fit_tree(const partition::PartitionData& train, const TreeParams& params, const std::string& label_column) {
    partition::require_train(train, "decision tree fit");
    params.validate();
    if (train.data.rows() == 0) fail(ErrorKind::fit_error, "cannot fit a tree on an empty train partition");
    const auto x = feature_matrix(train.data);
    const auto [classes, y] = encode_labels(train.data, label_column);
    std::vector<std::size_t> sample(x.rows);
    std::iota(sample.begin(), sample.end(), 0);
    return detail::Builder::fit(x, y, classes, sample, params, x.cols(), nullptr);
}

// ---- random forest ---------------------------------------------------------

std::vector<std::vector<double>> RandomForest::predict_proba(const FeatureMatrix& x) const {
    check_shape(x);
    std::vector<std::vector<double>> out(x.rows, std::vector<double>(classes_.size(), 0.0));
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (const auto& t : trees_) {
            const auto& p = t.leaf_for(x.row(r)).probabilities;
            for (std::size_t c = 0; c < p.size(); ++c) out[r][c] += p[c];
        }
        for (auto& v : out[r]) v /= static_cast<double>(trees_.size());
    }
    return out;
}

json RandomForest::to_json() const {
    json j;
    j["kind"] = "forest";
    j["version"] = kToolVersion;
    j["classes"] = classes_;
    j["features"] = features_;
    j["params"] = {{"n_trees", params_.n_trees},
                   {"m", m_},
                   {"bootstrap", params_.bootstrap},
                   {"seed", params_.seed},
                   {"max_depth", params_.tree.max_depth},
                   {"min_samples_split", params_.tree.min_samples_split},
                   {"min_impurity_decrease", params_.tree.min_impurity_decrease}};
    j["tree_seeds"] = seeds_;
    j["train_rows"] = oob_.empty() ? 0 : oob_.front().size();
    json oob = json::array();
    for (const auto& mask : oob_) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < mask.size(); ++r) {
            if (mask[r]) rows.push_back(r);
        }
        oob.push_back(rows);
    }
    j["oob_rows"] = std::move(oob);
    json trees = json::array();
    for (const auto& t : trees_) {
        json tj;
        if (!t.impurity_decrease().empty()) tj["impurity_decrease"] = t.impurity_decrease();
        tj["params"] = {{"max_depth", t.params().max_depth},
                        {"min_samples_split", t.params().min_samples_split},
                        {"min_impurity_decrease", t.params().min_impurity_decrease}};
        tj["root"] = detail::Builder::node_json(t, 0);
        trees.push_back(std::move(tj));
    }
    j["trees"] = std::move(trees);
    return j;
}

RandomForest RandomForest::from_json(const json& j) { return detail::Builder::forest_from_json(j); }

RandomForest fit_forest(const partition::PartitionData& train, const ForestParams& params,
                        const std::string& label_column) {
    partition::require_train(train, "random forest fit");
    params.validate();
    if (train.data.rows() == 0) fail(ErrorKind::fit_error, "cannot fit a forest on an empty train partition");
    const auto x = feature_matrix(train.data);
    const auto [classes, y] = encode_labels(train.data, label_column);
    return detail::Builder::forest(x, y, classes, params);
}

// ---- k-NN ------------------------------------------------------------------

std::vector<std::size_t> KnnModel::neighbours(const double* query) const {
    const std::size_t p = train_.cols();
    std::vector<std::pair<double, std::size_t>> d(train_.rows);
    for (std::size_t r = 0; r < train_.rows; ++r) {
        const double* row = train_.row(r);
        double s = 0;
        for (std::size_t c = 0; c < p; ++c) {
            const double diff = row[c] - query[c];
            s += diff * diff;
        }
        d[r] = {s, r};
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k_), d.end());
    std::vector<std::size_t> out(k_);
    for (std::size_t i = 0; i < k_; ++i) out[i] = d[i].second;
    return out;
}

std::vector<std::vector<double>> KnnModel::predict_proba(const FeatureMatrix& x) const {
    check_shape(x);
    std::vector<std::vector<double>> out(x.rows, std::vector<double>(classes_.size(), 0.0));
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (auto i : neighbours(x.row(r))) out[r][labels_[i]] += 1.0;
        for (auto& v : out[r]) v /= static_cast<double>(k_);
    }
    return out;
}

json KnnModel::to_json() const {
    json j;
    j["kind"] = "knn";
    j["version"] = kToolVersion;
    j["classes"] = classes_;
    j["features"] = features_;
    j["k"] = k_;
    j["distance"] = "euclidean";
    json m = json::array();
    for (std::size_t r = 0; r < train_.rows; ++r) m.push_back(std::vector<double>(train_.row(r), train_.row(r) + train_.cols()));
    j["matrix"] = std::move(m);
    j["labels"] = labels_;
    return j;
}

KnnModel KnnModel::from_json(const json& j) { return detail::Builder::knn_from_json(j); }

KnnModel fit_knn(const partition::PartitionData& train, std::size_t k, const std::string& label_column) {
    partition::require_train(train, "k-NN fit");
    if (train.data.rows() == 0) fail(ErrorKind::fit_error, "cannot fit k-NN on an empty train partition");
    if (k < 1 || k > train.data.rows()) {
        fail(ErrorKind::config_error,
             "k must be in [1, " + std::to_string(train.data.rows()) + "], got " + std::to_string(k));
    }
    auto x = feature_matrix(train.data);
    auto [classes, y] = encode_labels(train.data, label_column);
    return detail::Builder::knn(std::move(x), std::move(y), classes, k);
}

// ---- factory and serialization ---------------------------------------------

std::vector<std::string> param_names(ModelKind kind) {
    switch (kind) {
        case ModelKind::tree: return {"max_depth", "min_samples_split", "min_impurity_decrease"};
        case ModelKind::forest:
            return {"n_trees", "m", "bootstrap", "max_depth", "min_samples_split", "min_impurity_decrease"};
        case ModelKind::knn: return {"k"};
    }
    return {};
}

namespace {

void check_param_keys(ModelKind kind, const json& params) {
    if (!params.is_object()) fail(ErrorKind::config_error, "model parameters must be an object");
    const auto allowed = param_names(kind);
    for (const auto& [key, _] : params.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(ErrorKind::config_error,
                 "unknown parameter '" + key + "' for model '" + std::string(to_string(kind)) + "'");
        }
    }
}

TreeParams tree_params(const json& params) {
    TreeParams t;
    t.max_depth = as_count(params, "max_depth", t.max_depth);
    t.min_samples_split = as_count(params, "min_samples_split", t.min_samples_split);
    t.min_impurity_decrease = as_number(params, "min_impurity_decrease", t.min_impurity_decrease);
    return t;
}

}  // namespace

ModelPtr fit_model(ModelKind kind, const json& params, const partition::PartitionData& train, std::uint64_t seed,
                   const std::string& label_column) {
    check_param_keys(kind, params);
    switch (kind) {
        case ModelKind::tree:
            return std::make_shared<DecisionTree>(fit_tree(train, tree_params(params), label_column));
        case ModelKind::forest: {
            ForestParams f;
            f.tree = tree_params(params);
            f.n_trees = as_count(params, "n_trees", f.n_trees);
            f.m = as_count(params, "m", f.m);
            f.bootstrap = as_flag(params, "bootstrap", f.bootstrap);
            f.seed = seed;
            return std::make_shared<RandomForest>(fit_forest(train, f, label_column));
        }
        case ModelKind::knn:
            return std::make_shared<KnnModel>(fit_knn(train, as_count(params, "k", 5), label_column));
    }
    fail(ErrorKind::config_error, "unknown model kind");
}

json model_to_json(const Classifier& model) { return model.to_json(); }

ModelPtr model_from_json(const json& j) {
    const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
        case ModelKind::tree: return std::make_shared<DecisionTree>(DecisionTree::from_json(j));
        case ModelKind::forest: return std::make_shared<RandomForest>(RandomForest::from_json(j));
        case ModelKind::knn: return std::make_shared<KnnModel>(KnnModel::from_json(j));
    }
    fail(ErrorKind::config_error, "unknown model kind");
}

// ---- grid search -----------------------------------------------------------

void HyperGrid::validate() const {
    if (params.empty()) fail(ErrorKind::config_error, "hyperparameter grid is empty");
    const auto allowed = param_names(kind);
    for (const auto& [key, values] : params) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(ErrorKind::config_error,
                 "unknown grid parameter '" + key + "' for model '" + std::string(to_string(kind)) + "'");
        }
        if (values.empty()) fail(ErrorKind::config_error, "grid parameter '" + key + "' has no values");
        for (double v : values) {
            if (!std::isfinite(v)) fail(ErrorKind::config_error, "grid parameter '" + key + "' has a non-finite value");
        }
    }
    if (!eval::is_known_metric(metric)) fail(ErrorKind::config_error, "unknown scoring metric '" + metric + "'");
    if (folds < 2) fail(ErrorKind::config_error, "cross-validation needs at least 2 folds");
}

std::vector<json> HyperGrid::combinations() const {
    std::vector<json> out = {json::object()};
    for (const auto& [key, values] : params) {
        std::vector<json> next;
        for (const auto& partial : out) {
            for (double v : values) {
                json c = partial;
                if (v == std::floor(v) && std::abs(v) < 9e15) c[key] = static_cast<std::int64_t>(v);
                else c[key] = v;
                next.push_back(std::move(c));
            }
        }
        out = std::move(next);
    }
    return out;
}

namespace {

/// Lexicographic complexity key: fewer trees, shallower, smaller k and m,
/// then larger split thresholds.
std::vector<double> complexity(const json& p) {
    auto get = [&](const char* k, double fallback) { return p.contains(k) ? p.at(k).get<double>() : fallback; };
    const double inf = std::numeric_limits<double>::infinity();
    const double depth = get("max_depth", 0);
    return {get("n_trees", 0),       depth == 0 ? inf : depth, get("k", 0), get("m", 0),
            -get("min_samples_split", 0), -get("min_impurity_decrease", 0), get("bootstrap", 1)};
}

double fold_score(const Dataset& ds, const partition::SplitAssignment& fold, const json& chain_steps,
                  ModelKind kind, const json& params, std::uint64_t seed, const std::string& metric,
                  const std::string& label_column) {
    const auto train = partition::take(ds, fold, partition::Partition::train);
    const auto val = partition::take(ds, fold, partition::Partition::val);
    const auto fitted = transforms::fit_chain(chain_steps, train);
    const auto val_t = fitted.chain.apply(val);
    const auto model = fit_model(kind, params, fitted.train, seed, label_column);
    const auto pred = model->predict(val_t.data);
    const auto cm = eval::confusion(val_t.data.text(label_column), pred.labels, model->classes());
    return eval::score(cm, metric);
}

}  // namespace

GridResult grid_search(const Dataset& ds, const partition::SplitAssignment& design, const json& chain_steps,
                       const HyperGrid& grid, std::uint64_t seed, const std::string& label_column,
                       bool allow_temporal) {
    grid.validate();
    if (design.tags.size() != ds.rows()) {
        throw Error(ErrorKind::lineage_error, kModule, "design assignment does not index this dataset");
    }
    if (std::find(design.tags.begin(), design.tags.end(), partition::Partition::test) != design.tags.end()) {
        throw Error(ErrorKind::leakage_error, kModule,
                    "design set contains " + std::to_string(design.count(partition::Partition::test)) +
                        " test rows; grid search must not see the test partition");
    }
    const auto folds = partition::kfold(ds, design, grid.folds, seed, label_column, allow_temporal);

    GridResult result;
    result.design_fingerprint = sha256_hex(design.fingerprint(partition::Partition::train) + "|" +
                                           design.fingerprint(partition::Partition::val));
    for (const auto& params : grid.combinations()) {
        CvRow row;
        row.params = params;
        for (const auto& fold : folds) {
            row.fold_scores.push_back(fold_score(ds, fold, chain_steps, grid.kind, params, seed, grid.metric, label_column));
        }
        const double n = static_cast<double>(row.fold_scores.size());
        row.mean = std::accumulate(row.fold_scores.begin(), row.fold_scores.end(), 0.0) / n;
        double ss = 0;
        for (double s : row.fold_scores) ss += (s - row.mean) * (s - row.mean);
        row.stdev = std::sqrt(ss / n);
        result.table.push_back(std::move(row));
    }
    for (std::size_t i = 1; i < result.table.size(); ++i) {
        const auto& cand = result.table[i];
        const auto& best = result.table[result.best];
        if (cand.mean > best.mean || (cand.mean == best.mean && complexity(cand.params) < complexity(best.params))) {
            result.best = i;
        }
    }
    result.best_params = result.table[result.best].params;

    partition::SplitAssignment full = design;
    for (auto& t : full.tags) {
        if (t == partition::Partition::val) t = partition::Partition::train;
    }
    const auto train = partition::take(ds, full, partition::Partition::train);
    auto fitted = transforms::fit_chain(chain_steps, train);
    result.chain = std::move(fitted.chain);
    result.model = fit_model(grid.kind, result.best_params, fitted.train, seed, label_column);
    return result;
}

std::string GridResult::table_csv(const std::string& comment) const {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    std::vector<std::string> keys;
    if (!table.empty()) {
        for (const auto& [k, _] : table.front().params.items()) keys.push_back(k);
    }
    for (const auto& k : keys) out += k + ",";
    out += "mean,std";
    const std::size_t nf = table.empty() ? 0 : table.front().fold_scores.size();
    for (std::size_t f = 0; f < nf; ++f) out += ",fold" + std::to_string(f);
    out += ",best\n";
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& r = table[i];
        for (const auto& k : keys) out += format_number(r.params.at(k).get<double>()) + ",";
        out += format_number(r.mean) + "," + format_number(r.stdev);
        for (double s : r.fold_scores) out += "," + format_number(s);
        out += i == best ? ",1\n" : ",0\n";
    }
    return out;
}

}  // namespace flowcls::models
