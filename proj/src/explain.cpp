#include "flowcls/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "flowcls/error.hpp"
#include "flowcls/evaluation.hpp"
#include "flowcls/transforms.hpp"

namespace flowcls::explain {

namespace {

constexpr std::string_view kModule = "explain";

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, kModule, msg); }

std::vector<double> normalized(const std::vector<double>& v) {
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    std::vector<double> out(v.size(), 0.0);
    if (total <= 0) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / total;
    return out;
}

void rank_rows(ImportanceTable& t) {
    std::stable_sort(t.rows.begin(), t.rows.end(),
                     [](const auto& a, const auto& b) { return a.importance > b.importance; });
    for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i].rank = i + 1;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
    return out;
}

double score_of(const models::Classifier& model, const models::FeatureMatrix& x, const std::vector<std::string>& actual,
                const std::string& metric) {
    const auto pred = model.predict(x);
    return eval::score(eval::confusion(actual, pred.labels, model.classes()), metric);
}

}  // namespace

const ImportanceRow& ImportanceTable::row(const std::string& name) const {
    for (const auto& r : rows) {
        if (r.name == name) return r;
    }
    fail(ErrorKind::value_error, "no importance row named '" + name + "'");
}

std::string ImportanceTable::to_csv(const std::string& comment) const {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "rank,feature,importance,std,method,repeats\n";
    for (const auto& r : rows) {
        out += std::to_string(r.rank) + "," + csv_escape(r.name) + "," + format_number(r.importance) + "," +
               format_number(r.stdev) + "," + method + "," + std::to_string(repeats) + "\n";
    }
    return out;
}

std::string ImportanceTable::to_text(std::size_t width) const {
    std::size_t label_w = 0;
    double top = 0;
    for (const auto& r : rows) {
        label_w = std::max(label_w, r.name.size());
        top = std::max(top, std::abs(r.importance));
    }
    std::string out = method + " importance";
    if (method == "permutation") out += " (" + metric + ", " + std::to_string(repeats) + " repeats)";
    out += "\n";
    for (const auto& r : rows) {
        const auto bar = top > 0 ? static_cast<std::size_t>(std::lround(std::abs(r.importance) / top * static_cast<double>(width))) : 0;
        char value[32];
        std::snprintf(value, sizeof value, "%+.4f", r.importance);
        out += r.name + std::string(label_w - r.name.size() + 1, ' ') + value + " " +
               std::string(bar, r.importance < 0 ? '-' : '#') + "\n";
    }
    return out;
}

ImportanceTable gini_importance(const models::Classifier& model) {
    std::vector<double> imp;
    if (const auto* tree = dynamic_cast<const models::DecisionTree*>(&model)) {
        if (tree->impurity_decrease().empty()) fail(ErrorKind::unsupported_model, "tree carries no split bookkeeping");
        imp = normalized(tree->impurity_decrease());
    } else if (const auto* forest = dynamic_cast<const models::RandomForest*>(&model)) {
        imp.assign(model.features().size(), 0.0);
        for (const auto& t : forest->trees()) {
            if (t.impurity_decrease().empty()) fail(ErrorKind::unsupported_model, "forest tree carries no split bookkeeping");
            const auto n = normalized(t.impurity_decrease());
            for (std::size_t f = 0; f < n.size(); ++f) imp[f] += n[f];
        }
        for (auto& v : imp) v /= static_cast<double>(forest->trees().size());
    } else {
        fail(ErrorKind::unsupported_model,
             "Gini importance needs a tree or forest, got '" + std::string(models::to_string(model.kind())) + "'");
    }
    ImportanceTable t;
    t.method = "gini";
    for (std::size_t f = 0; f < imp.size(); ++f) t.rows.push_back({model.features()[f], {model.features()[f]}, imp[f], 0, 0});
    rank_rows(t);
    return t;
}

std::vector<std::vector<std::string>> correlation_groups(const Dataset& ds, const std::vector<std::string>& features,
                                                         double threshold) {
    const std::size_t p = features.size();
    std::vector<std::size_t> parent(p);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i + 1; j < p; ++j) {
            if (std::abs(pearson(ds.numeric(features[i]), ds.numeric(features[j]))) >= threshold) {
                const auto a = find(i), b = find(j);
                parent[std::max(a, b)] = std::min(a, b);
            }
        }
    }
    std::vector<std::vector<std::string>> groups;
    std::vector<std::ptrdiff_t> slot(p, -1);
    for (std::size_t i = 0; i < p; ++i) {
        const auto root = find(i);
        if (slot[root] < 0) {
            slot[root] = static_cast<std::ptrdiff_t>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(slot[root])].push_back(features[i]);
    }
    return groups;
}

void PermutationConfig::validate() const {
    if (!eval::is_known_metric(metric)) fail(ErrorKind::config_error, "unknown metric '" + metric + "'");
    if (repeats < 1) fail(ErrorKind::config_error, "repeats must be at least 1");
    if (!(correlation_threshold > 0 && correlation_threshold <= 1)) {
        fail(ErrorKind::config_error, "correlation_threshold must be in (0, 1]");
    }
}

ImportanceTable permutation_importance(const models::Classifier& model, const Dataset& eval_set,
                                       const PermutationConfig& cfg, const std::string& label_column) {
    cfg.validate();
    if (!eval_set.has(label_column)) fail(ErrorKind::config_error, "evaluation set has no '" + label_column + "' column");
    if (eval_set.rows() == 0) fail(ErrorKind::shape_error, "evaluation set is empty");
    const auto& features = model.features();
    const auto x = models::feature_matrix(eval_set, features);
    const auto& actual = eval_set.text(label_column);

    std::vector<std::vector<std::string>> groups = cfg.groups;
    if (groups.empty()) {
        if (cfg.group_correlated) {
            groups = correlation_groups(eval_set, features, cfg.correlation_threshold);
        } else {
            for (const auto& f : features) groups.push_back({f});
        }
    }

    ImportanceTable t;
    t.method = "permutation";
    t.metric = cfg.metric;
    t.repeats = cfg.repeats;
    t.baseline = score_of(model, x, actual, cfg.metric);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> perm(x.rows);
    for (const auto& group : groups) {
        std::vector<std::size_t> cols;
        for (const auto& name : group) {
            const auto it = std::find(features.begin(), features.end(), name);
            if (it == features.end()) fail(ErrorKind::config_error, "group member '" + name + "' is not a model feature");
            cols.push_back(static_cast<std::size_t>(it - features.begin()));
        }
        std::vector<double> drops;
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            auto shuffled = x;
            for (std::size_t i = 0; i < x.rows; ++i) {
                for (auto c : cols) shuffled.values[i * x.cols() + c] = x.values[perm[i] * x.cols() + c];
            }
            drops.push_back(t.baseline - score_of(model, shuffled, actual, cfg.metric));
        }
        const double n = static_cast<double>(drops.size());
        const double mean = std::accumulate(drops.begin(), drops.end(), 0.0) / n;
        double ss = 0;
        for (double d : drops) ss += (d - mean) * (d - mean);
        const double sd = drops.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        t.rows.push_back({join(group), group, mean, sd, 0});
    }
    rank_rows(t);
    return t;
}

std::vector<double> quantile_grid(const std::vector<double>& values, std::size_t points) {
    std::vector<double> sorted;
    for (double v : values) {
        if (!std::isnan(v)) sorted.push_back(v);
    }
    if (sorted.empty()) fail(ErrorKind::value_error, "cannot build a quantile grid from an empty column");
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> grid;
    for (std::size_t i = 0; i < points; ++i) {
        const double p = points == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(points - 1);
        grid.push_back(transforms::quantile(sorted, p));
    }
    return grid;
}

PartialDependence partial_dependence(const models::Classifier& model, const Dataset& eval_set,
                                     const std::string& feature, std::vector<double> grid) {
    const auto& features = model.features();
    const auto it = std::find(features.begin(), features.end(), feature);
    if (it == features.end()) fail(ErrorKind::config_error, "feature '" + feature + "' is not used by the model");
    const auto col = static_cast<std::size_t>(it - features.begin());
    if (eval_set.rows() == 0) fail(ErrorKind::shape_error, "evaluation set is empty");
    const auto x = models::feature_matrix(eval_set, features);
    if (grid.empty()) grid = quantile_grid(eval_set.numeric(feature));

    PartialDependence pd;
    pd.feature = feature;
    pd.grid = grid;
    pd.classes = model.classes();
    pd.curves.assign(pd.classes.size(), std::vector<double>(grid.size(), 0.0));
    auto work = x;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t r = 0; r < x.rows; ++r) work.values[r * x.cols() + col] = grid[g];
        const auto probs = model.predict_proba(work);
        for (const auto& p : probs) {
            for (std::size_t c = 0; c < p.size(); ++c) pd.curves[c][g] += p[c];
        }
        for (auto& curve : pd.curves) curve[g] /= static_cast<double>(x.rows);
    }
    return pd;
}

std::string PartialDependence::to_csv(const std::string& comment) const {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += csv_escape(feature);
    for (const auto& c : classes) out += "," + csv_escape("p(" + c + ")");
    out += "\n";
    for (std::size_t g = 0; g < grid.size(); ++g) {
        out += format_number(grid[g]);
        for (const auto& curve : curves) out += "," + format_number(curve[g]);
        out += "\n";
    }
    return out;
}

}  // namespace flowcls::explain
