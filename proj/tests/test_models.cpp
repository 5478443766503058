#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flowcls/error.hpp"
#include "flowcls/models.hpp"
#include "support/transform_checks.hpp"

using namespace flowcls;
using namespace flowcls::models;
using flowcls::partition::Partition;
using flowcls::testing::as_train;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::io_error;
}

/// Gaussian blobs with centres spaced `gap` apart along the diagonal.
Dataset blobs(std::mt19937_64& rng, std::size_t per_class, std::size_t classes, std::size_t dims, double sigma,
              double gap) {
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<std::vector<double>> cols(dims);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < per_class * classes; ++i) {
        const std::size_t c = i % classes;
        for (std::size_t d = 0; d < dims; ++d) {
            const double centre = gap * static_cast<double>(c) * (d % 2 == 0 ? 1.0 : -1.0);
            cols[d].push_back(centre + g(rng));
        }
        labels.push_back("class" + std::to_string(c));
    }
    Dataset ds;
    for (std::size_t d = 0; d < dims; ++d) ds.add_numeric("f" + std::to_string(d), cols[d]);
    ds.add_text("label", ColumnKind::label, labels);
    return ds;
}

Dataset uniform_points(std::mt19937_64& rng, std::size_t n, std::size_t dims, std::size_t classes) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
    std::vector<std::vector<double>> cols(dims);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& c : cols) c.push_back(u(rng));
        labels.push_back("k" + std::to_string(pick(rng)));
    }
    Dataset ds;
    for (std::size_t d = 0; d < dims; ++d) ds.add_numeric("f" + std::to_string(d), cols[d]);
    ds.add_text("label", ColumnKind::label, labels);
    return ds;
}

double accuracy_on(const Classifier& m, const Dataset& ds) {
    const auto pred = m.predict(ds);
    const auto& truth = ds.text("label");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += pred.labels[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

void check_tree_invariants(const DecisionTree& t, double min_decrease) {
    for (const auto& n : t.nodes()) {
        const double s = std::accumulate(n.probabilities.begin(), n.probabilities.end(), 0.0);
        CHECK(std::abs(s - 1.0) < 1e-9);
        if (n.leaf()) continue;
        CHECK(std::isfinite(n.threshold));
        CHECK(t.nodes()[n.left].samples + t.nodes()[n.right].samples == n.samples);
        const double weighted = (static_cast<double>(t.nodes()[n.left].samples) * t.nodes()[n.left].impurity +
                                 static_cast<double>(t.nodes()[n.right].samples) * t.nodes()[n.right].impurity) /
                                static_cast<double>(n.samples);
        CHECK(n.impurity - weighted > 0);
        CHECK(n.impurity - weighted >= min_decrease - 1e-12);
        CHECK(std::abs((n.impurity - weighted) - n.decrease) < 1e-12);
    }
}

/// Independent k-NN: full sort of (distance, index) pairs, majority vote
/// with ties to the smallest class name.
std::string knn_oracle(const Dataset& train, const std::vector<double>& q, std::size_t k) {
    const auto names = train.names_of(ColumnKind::numeric);
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t r = 0; r < train.rows(); ++r) {
        double s = 0;
        for (std::size_t c = 0; c < names.size(); ++c) {
            const double diff = train.numeric(names[c])[r] - q[c];
            s += diff * diff;
        }
        d.emplace_back(s, r);
    }
    std::sort(d.begin(), d.end());
    std::map<std::string, std::size_t> votes;
    for (std::size_t i = 0; i < k; ++i) ++votes[train.text("label")[d[i].second]];
    std::string best;
    std::size_t most = 0;
    for (const auto& [label, n] : votes) {
        if (n > most) {
            most = n;
            best = label;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("gini impurity") {
    CHECK(gini({4, 0}, 4) == 0.0);
    CHECK(gini({2, 2}, 4) == doctest::Approx(0.5));
    CHECK(gini({1, 1, 1}, 3) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("tree on separable 1-D data") {
    Dataset ds;
    std::vector<double> x;
    std::vector<std::string> y;
    for (int i = 0; i <= 10; ++i) {
        x.push_back(i);
        y.push_back(i > 5 ? "high" : "low");
    }
    ds.add_numeric("x", x);
    ds.add_text("label", ColumnKind::label, y);
    TreeParams p;
    p.max_depth = 1;
    auto t = fit_tree(as_train(ds), p);
    REQUIRE(!t.nodes()[0].leaf());
    CHECK(t.nodes()[0].threshold > 5);
    CHECK(t.nodes()[0].threshold < 6);
    CHECK(t.nodes()[0].threshold == 5.5);
    CHECK(accuracy_on(t, ds) == 1.0);
    CHECK(t.depth() == 1);

    // a node too small to split is a single leaf with a constant prediction
    p.min_samples_split = 100;
    auto leaf = fit_tree(as_train(ds), p);
    CHECK(leaf.nodes().size() == 1);
    auto pred = leaf.predict(ds);
    CHECK(std::all_of(pred.labels.begin(), pred.labels.end(), [](auto& l) { return l == "low"; }));
    CHECK(pred.probabilities[0][1] == doctest::Approx(6.0 / 11.0));
}

TEST_CASE("tree memorizes distinct training rows and respects split invariants") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        auto ds = uniform_points(rng, 300, 4, 3);
        auto t = fit_tree(as_train(ds));
        CHECK(accuracy_on(t, ds) == 1.0);
        check_tree_invariants(t, 0.0);

        TreeParams p;
        p.min_impurity_decrease = 0.15;
        auto pruned = fit_tree(as_train(ds), p);
        check_tree_invariants(pruned, 0.15);
        CHECK(pruned.nodes().size() < t.nodes().size());
    }
}

TEST_CASE("tree threshold ties go to the lowest feature") {
    Dataset ds;
    ds.add_numeric("a", {0, 0, 1, 1});
    ds.add_numeric("b", {0, 0, 1, 1});
    ds.add_text("label", ColumnKind::label, {"n", "n", "y", "y"});
    auto t = fit_tree(as_train(ds));
    CHECK(t.nodes()[0].feature == 0);
    CHECK(t.nodes()[0].threshold == 0.5);
}

TEST_CASE("model input validation") {
    std::mt19937_64 rng(2);
    auto ds = uniform_points(rng, 50, 3, 2);
    auto t = fit_tree(as_train(ds));

    Dataset narrow = ds;
    narrow.drop_column("f2");
    CHECK(kind_of([&] { t.predict(narrow); }) == ErrorKind::shape_error);

    Dataset nan = ds;
    nan.column("f1").numbers[3] = std::nan("");
    CHECK(kind_of([&] { fit_tree(as_train(nan)); }) == ErrorKind::value_error);
    CHECK(kind_of([&] { t.predict(nan); }) == ErrorKind::value_error);

    Dataset cat = ds;
    cat.add_text("proto", ColumnKind::categorical, std::vector<std::string>(ds.rows(), "tcp"));
    CHECK(kind_of([&] { fit_forest(as_train(cat)); }) == ErrorKind::config_error);

    Dataset empty;
    empty.add_numeric("f0", {});
    empty.add_text("label", ColumnKind::label, {});
    CHECK(kind_of([&] { fit_tree(as_train(empty)); }) == ErrorKind::fit_error);

    CHECK(kind_of([&] { fit_tree(partition::unpartitioned(ds)); }) == ErrorKind::leakage_error);
    CHECK(kind_of([&] { fit_knn(as_train(ds), 51); }) == ErrorKind::config_error);
    CHECK(kind_of([&] { fit_knn(as_train(ds), 0); }) == ErrorKind::config_error);
    ForestParams fp;
    fp.m = 4;
    CHECK(kind_of([&] { fit_forest(as_train(ds), fp); }) == ErrorKind::config_error);
    CHECK(kind_of([&] { fit_model(ModelKind::knn, {{"depth", 3}}, as_train(ds)); }) == ErrorKind::config_error);
}

TEST_CASE("forest degenerates to a tree") {
    std::mt19937_64 rng(8);
    auto ds = uniform_points(rng, 200, 5, 3);
    auto tree = fit_tree(as_train(ds));
    ForestParams p;
    p.n_trees = 1;
    p.m = 5;
    p.bootstrap = false;
    auto forest = fit_forest(as_train(ds), p);
    const auto a = tree.predict(ds), b = forest.predict(ds);
    CHECK(a.labels == b.labels);
    CHECK(a.probabilities == b.probabilities);
    CHECK(forest.trees()[0].to_json()["root"] == tree.to_json()["root"]);
}

TEST_CASE("forest determinism, OOB masks and blob accuracy") {
    std::mt19937_64 rng(17);
    auto train = blobs(rng, 200, 3, 4, 0.6, 3.0);
    auto test = blobs(rng, 100, 3, 4, 0.6, 3.0);
    ForestParams p;
    p.n_trees = 25;
    p.seed = 7;
    auto f1 = fit_forest(as_train(train), p);
    auto f2 = fit_forest(as_train(train), p);
    CHECK(f1.to_json() == f2.to_json());
    CHECK(f1.m() == 2);
    for (const auto& mask : f1.oob_masks()) {
        const auto oob = static_cast<double>(std::count(mask.begin(), mask.end(), true));
        CHECK(oob / 600.0 > 0.3);
        CHECK(oob / 600.0 < 0.45);
    }

    const double acc = accuracy_on(f1, test);
    CHECK(acc >= 0.95);
    CHECK(accuracy_on(fit_knn(as_train(train), 5), test) >= 0.95);

    p.seed = 8;
    auto f3 = fit_forest(as_train(train), p);
    CHECK(std::abs(accuracy_on(f3, test) - acc) < 0.05);

    for (const auto& pr : f1.predict(test).probabilities) {
        CHECK(std::abs(std::accumulate(pr.begin(), pr.end(), 0.0) - 1.0) < 1e-9);
        for (double v : pr) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("forest of unanimous trees and constant forests") {
    Dataset ds;
    ds.add_numeric("x", {0, 1, 2, 3, 10, 11, 12, 13});
    ds.add_text("label", ColumnKind::label, {"a", "a", "a", "a", "b", "b", "b", "b"});
    ForestParams p;
    p.n_trees = 5;
    p.bootstrap = false;
    auto f = fit_forest(as_train(ds), p);
    for (const auto& pr : f.predict(ds).probabilities) CHECK(*std::max_element(pr.begin(), pr.end()) == 1.0);

    Dataset one;
    one.add_numeric("x", {1, 2, 3});
    one.add_text("label", ColumnKind::label, {"z", "z", "z"});
    auto c = fit_forest(as_train(one), p);
    auto pred = c.predict(ds);
    CHECK(std::all_of(pred.labels.begin(), pred.labels.end(), [](auto& l) { return l == "z"; }));
}

TEST_CASE("k-NN agrees with a brute-force oracle") {
    std::mt19937_64 rng(4);
    auto train = uniform_points(rng, 200, 3, 4);
    // duplicated points create exact distance ties
    for (const char* col : {"f0", "f1", "f2"}) train.column(col).numbers[10] = train.column(col).numbers[11];
    auto queries = uniform_points(rng, 200, 3, 4);
    for (std::size_t k : {1u, 3u, 7u, 20u}) {
        auto m = fit_knn(as_train(train), k);
        auto pred = m.predict(queries);
        std::size_t agree = 0;
        for (std::size_t r = 0; r < queries.rows(); ++r) {
            std::vector<double> q = {queries.numeric("f0")[r], queries.numeric("f1")[r], queries.numeric("f2")[r]};
            agree += pred.labels[r] == knn_oracle(train, q, k);
        }
        CHECK(agree == queries.rows());
    }

    auto m1 = fit_knn(as_train(train), 1);
    auto self = m1.predict(train);
    for (std::size_t r = 0; r < train.rows(); ++r) {
        if (r == 11) continue;  // twin of row 10; the lower index wins
        CHECK(self.labels[r] == train.text("label")[r]);
    }
    CHECK(self.labels[11] == train.text("label")[10]);

    auto all = fit_knn(as_train(train), train.rows());
    std::map<std::string, std::size_t> freq;
    for (const auto& l : train.text("label")) ++freq[l];
    const auto majority = std::max_element(freq.begin(), freq.end(), [](auto& a, auto& b) { return a.second < b.second; });
    auto pa = all.predict(queries);
    CHECK(std::all_of(pa.labels.begin(), pa.labels.end(), [&](auto& l) { return l == majority->first; }));
}

TEST_CASE("model serialization round trip") {
    std::mt19937_64 rng(12);
    auto ds = blobs(rng, 60, 3, 3, 1.0, 2.0);
    ForestParams fp;
    fp.n_trees = 6;
    std::vector<ModelPtr> models = {std::make_shared<DecisionTree>(fit_tree(as_train(ds))),
                                    std::make_shared<RandomForest>(fit_forest(as_train(ds), fp)),
                                    std::make_shared<KnnModel>(fit_knn(as_train(ds), 3))};
    for (const auto& m : models) {
        const auto text = model_to_json(*m).dump();
        auto back = model_from_json(json::parse(text));
        CHECK(back->kind() == m->kind());
        CHECK(back->predict(ds).probabilities == m->predict(ds).probabilities);
        CHECK(model_to_json(*back).dump() == text);
    }
}

TEST_CASE("grid search") {
    std::mt19937_64 rng(31);
    auto ds = blobs(rng, 60, 3, 3, 1.2, 2.0);
    partition::SplitSpec spec;
    spec.seed = 5;
    auto split = partition::split_random_stratified(ds, spec);
    auto design = partition::design_set(split);
    const json chain = json::parse(R"([{"kind": "standard"}])");

    HyperGrid single;
    single.kind = ModelKind::knn;
    single.params = {{"k", {3}}};
    single.folds = 3;
    auto one = grid_search(ds, design, chain, single);
    CHECK(one.table.size() == 1);
    CHECK(one.best_params == json{{"k", 3}});
    CHECK(one.model->kind() == ModelKind::knn);

    HyperGrid g;
    g.kind = ModelKind::forest;
    g.params = {{"n_trees", {3, 9}}, {"max_depth", {1, 3, 0}}, {"m", {1, 2}}};
    g.folds = 4;
    auto r = grid_search(ds, design, chain, g, 3);
    CHECK(r.table.size() == 12);
    for (const auto& row : r.table) {
        CHECK(row.fold_scores.size() == 4);
        CHECK(r.table[r.best].mean >= row.mean);
    }
    CHECK(r.best_params == r.table[r.best].params);
    CHECK(r.table_csv().find("n_trees") != std::string::npos);

    // Test rows in the design set are refused.
    CHECK(kind_of([&] { grid_search(ds, split, chain, single); }) == ErrorKind::leakage_error);

    // Poisoned test rows are never read: results match the clean run.
    Dataset poisoned = ds;
    for (auto row : split.rows(Partition::test)) {
        for (const char* col : {"f0", "f1", "f2"}) poisoned.column(col).numbers[row] = std::nan("");
    }
    auto pdesign = design;
    pdesign.dataset_hash = partition::dataset_hash(poisoned);
    auto pr = grid_search(poisoned, pdesign, chain, single);
    CHECK(pr.table[0].fold_scores == one.table[0].fold_scores);

    // Ties go to the simpler combination.
    HyperGrid ties;
    ties.kind = ModelKind::tree;
    ties.params = {{"max_depth", {0, 20, 10}}};
    ties.folds = 3;
    auto t = grid_search(ds, design, chain, ties);
    if (t.table[0].mean == t.table[1].mean && t.table[1].mean == t.table[2].mean) {
        CHECK(t.best_params == json{{"max_depth", 10}});
    }

    HyperGrid bad = single;
    bad.metric = "auc_pr";
    CHECK(kind_of([&] { grid_search(ds, design, chain, bad); }) == ErrorKind::config_error);
    bad = single;
    bad.params = {{"depth", {1}}};
    CHECK(kind_of([&] { grid_search(ds, design, chain, bad); }) == ErrorKind::config_error);
}
