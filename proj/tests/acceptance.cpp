// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flowcls/cli.hpp"
#include "flowcls/error.hpp"
#include "flowcls/evaluation.hpp"
#include "flowcls/explain.hpp"
#include "flowcls/flow_features.hpp"
#include "flowcls/flow_meter.hpp"
#include "flowcls/io.hpp"
#include "flowcls/models.hpp"
#include "flowcls/partition.hpp"
#include "flowcls/transforms.hpp"
#include "support/meter_oracle.hpp"
#include "support/split_checks.hpp"
#include "support/stat_oracles.hpp"
#include "support/test_support.hpp"
#include "support/transform_checks.hpp"

using namespace flowcls;
namespace fs = std::filesystem;
using partition::Partition;
using testing::as_train;
using json = nlohmann::ordered_json;

namespace {

/// Collects failure messages for one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        failed_ |= !ok;
    }
    bool failed() const noexcept { return failed_; }
    std::string summary() const {
        std::string out;
        for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + f;
        return out;
    }

private:
    std::vector<std::string> failures_;
    bool failed_ = false;
};

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::io_error;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

// ---- 1: metering oracle ----------------------------------------------------

void metering_oracle(Check& c) {
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<std::size_t> size(500, 10000), hosts(5, 60);
    testing::TempDir dir;
    const auto t0 = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 50; ++trial) {
        auto pkts = testing::random_traffic(rng, size(rng), hosts(rng), 900);
        const auto file = dir.file("cap.pcap");
        testing::write_capture(file, pkts);
        const auto cap = ingest::parse_capture(file, {});
        meter::MeterConfig cfg;
        cfg.idle_timeout = std::chrono::seconds(trial % 2 ? 15 : 30);
        cfg.active_timeout = std::chrono::seconds(trial % 3 ? 120 : 300);
        cfg.lookup = trial % 2 ? meter::LookupStrategy::dual_hash : meter::LookupStrategy::canonical;
        const auto got = testing::summarize(meter::meter_packets(cap.packets, cfg));
        const auto want = testing::reference_flows(cap.packets, cfg);
        c.expect(got == want, "capture " + std::to_string(trial) + " differs from reference (" +
                                  std::to_string(got.size()) + " vs " + std::to_string(want.size()) + " records)");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < 30, "took " + fmt(secs) + " s");
}

// ---- 2: packet conservation ------------------------------------------------

void packet_conservation(Check& c) {
    std::mt19937_64 rng(1002);
    testing::TempDir dir;
    for (int trial = 0; trial < 20; ++trial) {
        auto pkts = testing::random_traffic(rng, 4000, 30, 600);
        const auto file = dir.file("cap.pcap");
        testing::write_capture(file, pkts);
        const auto cap = ingest::parse_capture(file, {});
        meter::MeterConfig cfg;
        cfg.max_flows = 1u << 20;
        const auto records = meter::meter_packets(cap.packets, cfg);
        const auto ds = meter::flows_to_dataset(records, cfg.splt_n);
        double total = 0;
        for (double v : ds.numeric("total_packet_count")) total += v;
        c.expect(static_cast<std::uint64_t>(total) == cap.summary.decoded,
                 "capture " + std::to_string(trial) + ": " + fmt(total) + " != " +
                     std::to_string(cap.summary.decoded));
    }
}

// ---- 3: idle-timeout scenario ----------------------------------------------

void idle_split_scenario(Check& c) {
    std::vector<ingest::Packet> pkts;
    for (double t : {0.0, 1.0, 2.0, 42.0}) {
        pkts.push_back(testing::make_packet(t, "10.0.0.1", 40000, "10.0.0.2", 80, ingest::kProtoTcp, 60, ingest::tcp_flag::ack));
    }
    meter::MeterConfig cfg;
    cfg.idle_timeout = std::chrono::seconds(30);
    const auto r = meter::meter_packets(pkts, cfg);
    c.expect(r.size() == 2, "expected 2 records, got " + std::to_string(r.size()));
    if (r.size() != 2) return;
    c.expect(r[0].segment_index == 0 && r[1].segment_index == 1, "segment indices are not 0,1");
    c.expect(r[0].export_reason == meter::ExportReason::idle, "first record not exported on idle");
    c.expect(r[1].export_reason == meter::ExportReason::end_of_input, "second record not end_of_input");
    c.expect(r[0].total_packets() == 3 && r[1].total_packets() == 1, "packet counts are not 3 and 1");
}

// ---- 4: streaming moments --------------------------------------------------

void streaming_moments(Check& c) {
    std::mt19937_64 rng(1004);
    std::uniform_int_distribution<int> len(2, 1000);
    std::lognormal_distribution<double> val(3.0, 1.0);
    double worst = 0;
    for (int s = 0; s < 1000; ++s) {
        std::vector<double> xs(static_cast<std::size_t>(len(rng)));
        for (auto& x : xs) x = val(rng);
        RunningMoments m;
        for (double x : xs) m.push(x);
        const auto ref = testing::two_pass_moments(xs);
        worst = std::max({worst, testing::relative_error(m.mean(), ref.mean),
                          testing::relative_error(m.variance(), ref.variance),
                          testing::relative_error(m.skewness(), ref.skewness),
                          testing::relative_error(m.kurtosis(), ref.kurtosis)});
    }
    c.expect(worst < 1e-9, "max relative error " + fmt(worst));
}

// ---- 5: metric identities --------------------------------------------------

void metric_identities(Check& c) {
    std::mt19937_64 rng(1005);
    std::uniform_int_distribution<int> cls(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> a, p;
        for (int i = 0; i < 300; ++i) {
            a.push_back("c" + std::to_string(cls(rng)));
            p.push_back(i % 3 ? a.back() : "c" + std::to_string(cls(rng)));
        }
        const auto cm = eval::confusion(a, p);
        const double micro = eval::aggregate(cm, eval::Metric::f_beta, eval::Aggregation::micro);
        c.expect(micro == eval::accuracy(cm), "micro-F1 " + fmt(micro) + " != accuracy");
    }

    std::vector<std::string> truth(990, "benign"), majority(1000, "benign");
    truth.insert(truth.end(), 10, "attack");
    const double acc = eval::accuracy(eval::confusion(truth, majority));
    c.expect(acc == 0.99, "majority accuracy " + fmt(acc));

    const double f2 = eval::f_beta(1.0, 0.5, 2.0);
    c.expect(std::abs(f2 - 0.5556) <= 1e-4, "F2(1, 0.5) = " + fmt(f2));

    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> coarse(0, 50);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> scores;
        std::vector<bool> pos;
        std::vector<int> pos_int;
        for (int i = 0; i < 10000; ++i) {
            const bool y = u(rng) < 0.3;
            // trial 2 uses coarse scores to exercise ties
            scores.push_back(trial == 2 ? coarse(rng) / 50.0 + (y ? 0.05 : 0) : u(rng) + (y ? 0.3 : 0));
            pos.push_back(y);
            pos_int.push_back(y);
        }
        const double auc = eval::roc_auc(scores, pos).auc;
        const double mw = testing::mann_whitney_auc(scores, pos_int);
        c.expect(std::abs(auc - mw) < 1e-9, "AUC " + fmt(auc) + " vs Mann-Whitney " + fmt(mw));
    }
}

// ---- 6: split properties ---------------------------------------------------

void split_properties(Check& c) {
    using partition::Strategy;
    std::mt19937_64 rng(1006);
    const auto t0 = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        const auto ds = testing::random_split_dataset(rng);
        for (auto s : {Strategy::random_stratified, Strategy::temporal, Strategy::disjoint, Strategy::ood}) {
            partition::SplitSpec spec;
            spec.strategy = s;
            spec.seed = static_cast<std::uint64_t>(trial);
            if (s == Strategy::ood) spec.held_out_classes = {"c0"};
            const auto a = partition::split(ds, spec);
            const std::string tag = std::string(partition::to_string(s)) + " #" + std::to_string(trial) + ": ";
            auto err = testing::check_exhaustive(ds, a);
            c.expect(err.empty(), tag + err);
            if (s == Strategy::temporal) {
                err = testing::check_temporal(ds, a);
                c.expect(err.empty(), tag + err);
            }
            if (s == Strategy::disjoint) {
                err = testing::check_disjoint_groups(ds, a, "src_ip");
                c.expect(err.empty(), tag + err);
            }
            if (s == Strategy::ood) {
                err = testing::check_ood(ds, a, {"c0"});
                c.expect(err.empty(), tag + err);
            }
            const auto design = partition::design_set(a);
            err = testing::check_kfold(design, partition::kfold(ds, design, 3, spec.seed, "label", s == Strategy::temporal));
            c.expect(err.empty(), tag + "k-fold " + err);
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < 20, "took " + fmt(secs) + " s");
}

// ---- 7: leakage guards -----------------------------------------------------

void leakage_guards(Check& c) {
    std::mt19937_64 rng(1007);
    const auto ds = testing::imbalanced_blobs(rng, 120, 40, 3);
    const auto a = partition::split_random_stratified(ds, {});
    const auto test = partition::take(ds, a, Partition::test);
    const json steps = json::parse(R"([{"kind": "standard"}])");

    // design set poisoned with a single test row
    auto poisoned = partition::design_set(a);
    poisoned.tags[a.rows(Partition::test).front()] = Partition::test;

    const std::vector<std::pair<std::string, std::function<void()>>> fits = {
        {"standard", [&] { transforms::fit_standard(test); }},
        {"minmax", [&] { transforms::fit_minmax(test); }},
        {"robust", [&] { transforms::fit_robust(test); }},
        {"pca", [&] { transforms::fit_pca(test, 2); }},
        {"iqr", [&] { transforms::fit_iqr_outlier(test); }},
        {"smote", [&] { transforms::smote(test, 3, 1); }},
        {"undersample", [&] { transforms::undersample(test, 1, 1); }},
        {"chain", [&] { transforms::fit_chain(steps, test); }},
        {"unpartitioned", [&] { transforms::fit_standard(partition::unpartitioned(ds)); }},
    };
    for (const auto& [name, fn] : fits) {
        c.expect(kind_of(fn) == ErrorKind::leakage_error, name + " fitted on test rows without leakage_error");
    }
    models::HyperGrid g;
    g.kind = models::ModelKind::knn;
    g.params = {{"k", {3}}};
    g.folds = 3;
    c.expect(kind_of([&] { models::grid_search(ds, a, steps, g); }) == ErrorKind::leakage_error,
             "grid search accepted a design set containing test rows");
    c.expect(kind_of([&] { models::grid_search(ds, poisoned, steps, g); }) == ErrorKind::leakage_error,
             "grid search accepted a design set poisoned with one test row");
    c.expect(kind_of([&] { models::grid_search(ds, partition::design_set(a), steps, g); }) == ErrorKind::io_error,
             "grid search on a clean design set raised");
}

// ---- 8: scaler contracts ---------------------------------------------------

void scaler_contracts(Check& c) {
    std::mt19937_64 rng(1008);
    std::lognormal_distribution<double> g(1, 2);
    Dataset ds;
    for (int col = 0; col < 5; ++col) {
        std::vector<double> v(301 + col);
        for (auto& x : v) x = g(rng);
        v.resize(301);
        ds.add_numeric("c" + std::to_string(col), v);
    }
    const auto train = as_train(ds);
    const auto s = transforms::fit_standard(train).apply(train.data);
    const auto m = transforms::fit_minmax(train).apply(train.data);
    const auto r = transforms::fit_robust(train).apply(train.data);
    for (int col = 0; col < 5; ++col) {
        const auto name = "c" + std::to_string(col);
        const auto& sv = s.numeric(name);
        const double mean = std::accumulate(sv.begin(), sv.end(), 0.0) / static_cast<double>(sv.size());
        c.expect(std::abs(mean) < 1e-9, name + " standard mean " + fmt(mean));
        const auto [lo, hi] = std::minmax_element(m.numeric(name).begin(), m.numeric(name).end());
        c.expect(std::abs(*lo) < 1e-9 && std::abs(*hi - 1) < 1e-9, name + " minmax range");
        auto rv = r.numeric(name);
        std::sort(rv.begin(), rv.end());
        c.expect(std::abs(transforms::quantile(rv, 0.5)) < 1e-9, name + " robust median");
    }
    Dataset five;
    five.add_numeric("x", {1, 2, 3, 4, 100});
    const auto robust = transforms::fit_robust(as_train(five)).apply(five);
    c.expect(robust.numeric("x")[4] == 48.5, "robust(100) = " + fmt(robust.numeric("x")[4]));
}

// ---- 9: SMOTE --------------------------------------------------------------

void smote_contract(Check& c) {
    std::mt19937_64 rng(1009);
    for (int trial = 0; trial < 5; ++trial) {
        const auto ds = testing::imbalanced_blobs(rng, 150, 20 + static_cast<std::size_t>(trial) * 5, 3);
        const auto res = transforms::smote(as_train(ds), 5, static_cast<std::uint64_t>(trial));
        std::map<std::string, std::size_t> counts;
        for (const auto& l : res.data.text("label")) ++counts[l];
        c.expect(counts["attack"] == counts["benign"], "classes not balanced");
        std::vector<std::vector<double>> pool;
        for (std::size_t r = 0; r < ds.rows(); ++r) {
            if (ds.text("label")[r] == "attack") pool.push_back({ds.numeric("f0")[r], ds.numeric("f1")[r], ds.numeric("f2")[r]});
        }
        double worst = 0;
        for (std::size_t r = ds.rows(); r < res.data.rows(); ++r) {
            const std::vector<double> y = {res.data.numeric("f0")[r], res.data.numeric("f1")[r], res.data.numeric("f2")[r]};
            worst = std::max(worst, testing::best_segment_residual(y, pool));
            c.expect(res.data.text("label")[r] == "attack", "synthetic row with majority label");
        }
        c.expect(worst < 1e-10, "segment residual " + fmt(worst));
    }
}

// ---- 10: PCA ---------------------------------------------------------------

void pca_contract(Check& c) {
    std::mt19937_64 rng(1010);
    std::normal_distribution<double> g;
    Dataset ds;
    const std::size_t p = 7;
    for (std::size_t col = 0; col < p; ++col) {
        std::vector<double> v(250);
        for (auto& x : v) x = g(rng) * static_cast<double>(col + 1) + static_cast<double>(col);
        ds.add_numeric("c" + std::to_string(col), v);
    }
    // correlated column pair
    auto mixed = ds.numeric("c0");
    for (std::size_t r = 0; r < mixed.size(); ++r) mixed[r] += 0.5 * ds.numeric("c3")[r];
    ds.column("c0").numbers = mixed;

    const auto full = transforms::fit_pca(as_train(ds), p);
    const auto comps = full.params["components"].get<std::vector<std::vector<double>>>();
    const auto ratio = full.params["explained_variance_ratio"].get<std::vector<double>>();
    double ortho = 0;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            const double dot = std::inner_product(comps[i].begin(), comps[i].end(), comps[j].begin(), 0.0);
            ortho = std::max(ortho, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    }
    c.expect(ortho < 1e-9, "orthonormality error " + fmt(ortho));
    for (std::size_t i = 1; i < p; ++i) c.expect(ratio[i - 1] >= ratio[i] - 1e-9, "eigenvalues out of order");

    const auto proj = full.apply(ds);
    const auto mean = full.params["mean"].get<std::vector<double>>();
    double worst = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (std::size_t a = 0; a < p; ++a) {
            double x = mean[a];
            for (std::size_t k = 0; k < p; ++k) x += comps[k][a] * proj.numeric("pc" + std::to_string(k + 1))[r];
            worst = std::max(worst, std::abs(x - ds.numeric("c" + std::to_string(a))[r]));
        }
    }
    c.expect(worst < 1e-9, "reconstruction error " + fmt(worst));

    Dataset line;
    std::vector<double> xs(50);
    for (auto& x : xs) x = g(rng);
    line.add_numeric("x", xs);
    line.add_numeric("y", xs);
    const auto lt = transforms::fit_pca(as_train(line), 2);
    const double first = lt.params["explained_variance_ratio"][0].get<double>();
    c.expect(first >= 1 - 1e-9, "y=x first explained fraction " + fmt(first));
}

// ---- 11: model sanity ------------------------------------------------------

Dataset uniform_points(std::mt19937_64& rng, std::size_t n, std::size_t dims, std::size_t classes) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
    Dataset ds;
    std::vector<std::vector<double>> cols(dims, std::vector<double>(n));
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& col : cols) col[i] = u(rng);
        labels.push_back("k" + std::to_string(pick(rng)));
    }
    for (std::size_t d = 0; d < dims; ++d) ds.add_numeric("f" + std::to_string(d), cols[d]);
    ds.add_text("label", ColumnKind::label, labels);
    return ds;
}

double accuracy_on(const models::Classifier& m, const Dataset& ds) {
    const auto pred = m.predict(ds);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ds.rows(); ++i) hit += pred.labels[i] == ds.text("label")[i];
    return static_cast<double>(hit) / static_cast<double>(ds.rows());
}

void model_sanity(Check& c) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1011);
    const auto train = uniform_points(rng, 200, 3, 3);
    const auto queries = uniform_points(rng, 200, 3, 3);
    const auto names = train.names_of(ColumnKind::numeric);
    for (std::size_t k : {1u, 5u, 15u}) {
        const auto model = models::fit_knn(as_train(train), k);
        const auto pred = model.predict(queries);
        std::size_t agree = 0;
        for (std::size_t q = 0; q < queries.rows(); ++q) {
            std::vector<std::pair<double, std::size_t>> d;
            for (std::size_t r = 0; r < train.rows(); ++r) {
                double s = 0;
                for (const auto& n : names) s += std::pow(train.numeric(n)[r] - queries.numeric(n)[q], 2);
                d.emplace_back(s, r);
            }
            std::sort(d.begin(), d.end());
            std::map<std::string, std::size_t> votes;
            for (std::size_t i = 0; i < k; ++i) ++votes[train.text("label")[d[i].second]];
            const auto best = std::max_element(votes.begin(), votes.end(),
                                               [](const auto& a, const auto& b) { return a.second < b.second; });
            agree += pred.labels[q] == best->first;
        }
        c.expect(agree == queries.rows(), "k=" + std::to_string(k) + ": " + std::to_string(agree) + "/200 agree");
    }

    const auto tree = models::fit_tree(as_train(train));
    c.expect(accuracy_on(tree, train) == 1.0, "tree train accuracy " + fmt(accuracy_on(tree, train)));

    std::normal_distribution<double> g;
    Dataset blobs;
    std::vector<std::vector<double>> cols(4);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < 3000; ++i) {
        const auto cls = i % 3;
        for (std::size_t d = 0; d < 4; ++d) cols[d].push_back(3.0 * static_cast<double>(cls) * (d % 2 ? -1 : 1) + g(rng));
        labels.push_back("blob" + std::to_string(cls));
    }
    for (std::size_t d = 0; d < 4; ++d) blobs.add_numeric("f" + std::to_string(d), cols[d]);
    blobs.add_text("label", ColumnKind::label, labels);
    partition::SplitSpec spec;
    spec.seed = 11;
    const auto a = partition::split_random_stratified(blobs, spec);
    const auto forest = models::fit_forest(partition::take(blobs, a, Partition::train), {});
    const auto test = partition::take(blobs, a, Partition::test);
    const double acc = accuracy_on(forest, test.data);
    c.expect(acc >= 0.95, "forest test accuracy " + fmt(acc));

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < 60, "took " + fmt(secs) + " s");
}

// ---- 12: explainability ----------------------------------------------------

void explainability(Check& c) {
    std::mt19937_64 rng(1012);
    std::uniform_real_distribution<double> u(0, 10);
    auto step = [&](std::size_t n) {
        Dataset ds;
        std::vector<double> f0(n), f1(n), f2(n);
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < n; ++i) {
            f0[i] = u(rng), f1[i] = u(rng), f2[i] = u(rng);
            labels.push_back(f0[i] > 5 ? "B" : "A");
        }
        ds.add_numeric("f0", f0);
        ds.add_numeric("f1", f1);
        ds.add_numeric("f2", f2);
        ds.add_text("label", ColumnKind::label, labels);
        return ds;
    };
    const auto train = step(400), val = step(200);
    models::TreeParams tp;
    tp.max_depth = 1;
    const auto stump = models::fit_tree(as_train(train), tp);
    explain::PermutationConfig pc;
    pc.group_correlated = false;
    const auto perm = explain::permutation_importance(stump, val, pc);
    for (const char* f : {"f1", "f2"}) {
        c.expect(perm.row(f).importance == 0.0, std::string("unused ") + f + " importance " + fmt(perm.row(f).importance));
    }
    for (const char* f : {"f1", "f2"}) {
        const auto pd = explain::partial_dependence(stump, val, f);
        for (const auto& curve : pd.curves) {
            const auto [lo, hi] = std::minmax_element(curve.begin(), curve.end());
            c.expect(*hi - *lo < 1e-12, std::string("PDP of ") + f + " spans " + fmt(*hi - *lo));
        }
    }

    // duplicated informative feature
    std::normal_distribution<double> g;
    std::bernoulli_distribution flip(0.1);
    auto twins = [&](std::size_t n) {
        std::vector<double> a, noise;
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < n; ++i) {
            a.push_back(g(rng));
            noise.push_back(g(rng));
            labels.push_back(((a.back() > 0) != flip(rng)) ? "pos" : "neg");
        }
        Dataset ds;
        ds.add_numeric("f0", a);
        ds.add_numeric("twin", a);
        ds.add_numeric("noise", noise);
        ds.add_text("label", ColumnKind::label, labels);
        return ds;
    };
    const auto ttrain = twins(600), tval = twins(300);
    models::ForestParams fp;
    fp.n_trees = 30;
    fp.m = 1;
    fp.tree.max_depth = 3;
    const auto forest = models::fit_forest(as_train(ttrain), fp);
    explain::PermutationConfig ic;
    ic.metric = "accuracy";
    ic.group_correlated = false;
    const auto single = explain::permutation_importance(forest, tval, ic);
    ic.group_correlated = true;
    const auto grouped = explain::permutation_importance(forest, tval, ic);
    const double best_single = std::max(single.row("f0").importance, single.row("twin").importance);
    const double pair = grouped.row("f0+twin").importance;
    c.expect(pair > best_single, "grouped " + fmt(pair) + " does not exceed individual " + fmt(best_single));
}

// ---- 13: end-to-end determinism --------------------------------------------

void end_to_end_determinism(Check& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path src = FLOWCLS_SOURCE_DIR;
    testing::TempDir dir;
    const std::vector<std::string> files = {"flows.csv", "dataset.csv", "split.csv", "chain.json", "model.json",
                                            "report.csv", "confusion.csv", "cv_table.csv", "importance_permutation.csv"};
    std::vector<std::map<std::string, std::string>> runs;
    for (const char* name : {"a", "b"}) {
        std::ostringstream out, err;
        const int rc = cli::run({"pipeline", "--config", (src / "configs/example.json").string(), "--run-dir",
                                 dir.file(name), "--input.capture", (src / "data/synthetic.pcap").string(),
                                 "--input.label_map", (src / "data/label_map.csv").string()},
                                out, err);
        c.expect(rc == 0, std::string("pipeline exit ") + std::to_string(rc) + ": " + err.str());
        if (rc != 0) return;
        std::map<std::string, std::string> contents;
        for (const auto& f : files) contents[f] = read_text_file((fs::path(dir.file(name)) / f).string());
        runs.push_back(std::move(contents));
    }
    for (const auto& f : files) c.expect(runs[0][f] == runs[1][f], f + " differs between runs");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < 120, "took " + fmt(secs) + " s");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
        {"metering matches the brute-force reference on 50 captures", metering_oracle},
        {"packet conservation", packet_conservation},
        {"idle-timeout split scenario", idle_split_scenario},
        {"streaming moments vs two-pass", streaming_moments},
        {"metric identities", metric_identities},
        {"split properties over 1000 datasets", split_properties},
        {"leakage guards", leakage_guards},
        {"scaler contracts", scaler_contracts},
        {"SMOTE convexity and balance", smote_contract},
        {"PCA orthonormality and reconstruction", pca_contract},
        {"model sanity", model_sanity},
        {"explainability", explainability},
        {"end-to-end determinism", end_to_end_determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("threw: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (c.failed() ? "FAIL" : "PASS") << " [" << (i + 1 < 10 ? "0" : "") << i + 1 << "] "
                  << criteria[i].first << " (" << fmt(secs) << " s)";
        if (c.failed()) std::cout << ": " << c.summary();
        std::cout << std::endl;
        failed += c.failed();
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
