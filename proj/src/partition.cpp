#include "flowcls/partition.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "flowcls/error.hpp"
#include "flowcls/hash.hpp"
#include "flowcls/net.hpp"

namespace flowcls::partition {

namespace {

constexpr std::string_view kModule = "partition";
using json = nlohmann::ordered_json;
using Counts = std::array<std::size_t, 3>;

constexpr Partition kParts[] = {Partition::train, Partition::val, Partition::test};

/// Largest-remainder apportionment of n over the three fractions; ties go
/// to the earlier partition.
Counts apportion(std::size_t n, const SplitSpec& spec) {
    const double fr[3] = {spec.train, spec.val, spec.test};
    Counts c{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = static_cast<double>(n) * fr[i];
        c[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - static_cast<double>(c[i]);
        used += c[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; used < n; ++k, ++used) ++c[order[k % 3]];
    return c;
}

void assign_in_order(const std::vector<std::size_t>& rows, const Counts& c, std::vector<Partition>& tags) {
    std::size_t k = 0;
    for (int p = 0; p < 3; ++p) {
        for (std::size_t i = 0; i < c[p]; ++i) tags[rows[k++]] = kParts[p];
    }
}

const std::vector<std::string>& labels_of(const Dataset& ds, const std::string& column) {
    if (!ds.has(column)) throw Error(ErrorKind::config_error, kModule, "missing label column '" + column + "'");
    return ds.column(column).texts;
}

/// Stratified allocation of `rows` (a subset of the dataset) by label.
void stratify(const std::vector<std::string>& labels, const std::vector<std::size_t>& rows, const SplitSpec& spec,
              std::mt19937_64& rng, std::vector<Partition>& tags) {
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (auto r : rows) {
        const auto& l = labels[r];
        if (l.empty() || l == "UNKNOWN") {
            throw Error(ErrorKind::stratification_error, kModule,
                        "row " + std::to_string(r) + " has no known label; filter unlabeled rows first");
        }
        by_class[l].push_back(r);
    }
    for (auto& [cls, members] : by_class) {
        if (members.size() < 3) {
            throw Error(ErrorKind::stratification_error, kModule,
                        "class '" + cls + "' has " + std::to_string(members.size()) + " rows; at least 3 are required");
        }
        std::shuffle(members.begin(), members.end(), rng);
        assign_in_order(members, apportion(members.size(), spec), tags);
    }
}

SplitAssignment blank(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    SplitAssignment a;
    a.tags.assign(ds.rows(), Partition::excluded);
    a.unseen.assign(ds.rows(), false);
    a.dataset_hash = dataset_hash(ds);
    a.strategy = spec.strategy;
    a.seed = spec.seed;
    return a;
}

std::vector<std::int64_t> time_values(const Dataset& ds, const std::string& key) {
    if (!ds.has(key)) throw Error(ErrorKind::config_error, kModule, "missing time column '" + key + "'");
    const auto& col = ds.column(key);
    std::vector<std::int64_t> t(ds.rows());
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        if (col.missing(r)) throw Error(ErrorKind::value_error, kModule, "row " + std::to_string(r) + ": missing " + key);
        t[r] = col.spec.is_text() ? parse_seconds(col.texts[r]).time_since_epoch().count()
                                  : from_seconds(col.numbers[r]).count();
    }
    return t;
}

}  // namespace

std::string_view to_string(Partition p) noexcept {
    switch (p) {
        case Partition::train: return "train";
        case Partition::val: return "val";
        case Partition::test: return "test";
        case Partition::excluded: break;
    }
    return "excluded";
}

Partition partition_from_string(std::string_view s) {
    for (auto p : {Partition::train, Partition::val, Partition::test, Partition::excluded}) {
        if (to_string(p) == s) return p;
    }
    throw Error(ErrorKind::value_error, kModule, "unknown partition '" + std::string(s) + "'");
}

std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::random_stratified: return "random_stratified";
        case Strategy::temporal: return "temporal";
        case Strategy::disjoint: return "disjoint";
        case Strategy::ood: return "ood";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view s) {
    for (auto v : {Strategy::random_stratified, Strategy::temporal, Strategy::disjoint, Strategy::ood}) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorKind::config_error, kModule, "unknown split strategy '" + std::string(s) + "'");
}

void SplitSpec::validate() const {
    for (double f : {train, val, test}) {
        if (!(f > 0 && f < 1)) throw Error(ErrorKind::config_error, kModule, "split fractions must lie in (0, 1)");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        throw Error(ErrorKind::config_error, kModule, "split fractions must sum to 1");
    }
    if (strategy == Strategy::disjoint && group_key.empty()) {
        throw Error(ErrorKind::config_error, kModule, "disjoint split needs group_key");
    }
    if (strategy == Strategy::temporal && time_key.empty()) {
        throw Error(ErrorKind::config_error, kModule, "temporal split needs time_key");
    }
    if (strategy == Strategy::ood && held_out_classes.empty()) {
        throw Error(ErrorKind::config_error, kModule, "ood split needs at least one held-out class");
    }
}

std::vector<std::size_t> SplitAssignment::rows(Partition p) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < tags.size(); ++r) {
        if (tags[r] == p) out.push_back(r);
    }
    return out;
}

std::size_t SplitAssignment::count(Partition p) const {
    return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), p));
}

std::string SplitAssignment::fingerprint(Partition p) const {
    std::string text = dataset_hash;
    text += '|';
    text += to_string(p);
    for (std::size_t r = 0; r < tags.size(); ++r) {
        if (tags[r] == p) {
            text += ',';
            text += std::to_string(r);
        }
    }
    return sha256_hex(text);
}

std::string SplitAssignment::to_csv(const std::string& comment) const {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "# dataset_hash=" + dataset_hash + "\n";
    out += "# strategy=" + std::string(partition::to_string(strategy)) + "\n";
    out += "# seed=" + std::to_string(seed) + "\n";
    out += "# fold=" + std::to_string(fold) + "\n";
    out += "row_id,partition\n";
    for (std::size_t r = 0; r < tags.size(); ++r) {
        out += std::to_string(r);
        out += ',';
        out += partition::to_string(tags[r]);
        out += '\n';
    }
    return out;
}

SplitAssignment SplitAssignment::from_csv(std::string_view text) {
    SplitAssignment a;
    bool header = false;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            auto body = line.substr(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) continue;
            const auto key = body.substr(0, eq);
            const auto val = std::string(body.substr(eq + 1));
            if (key == "dataset_hash") a.dataset_hash = val;
            else if (key == "strategy") a.strategy = strategy_from_string(val);
            else if (key == "seed") a.seed = std::stoull(val);
            else if (key == "fold") a.fold = std::stoi(val);
            continue;
        }
        if (!header) {
            if (line != "row_id,partition") {
                throw Error(ErrorKind::value_error, kModule, "assignment header must be 'row_id,partition'");
            }
            header = true;
            continue;
        }
        const auto comma = line.find(',');
        std::size_t id = 0;
        auto [p, ec] = std::from_chars(line.data(), line.data() + (comma == std::string_view::npos ? 0 : comma), id);
        if (comma == std::string_view::npos || ec != std::errc{} || id != a.tags.size()) {
            throw Error(ErrorKind::value_error, kModule, "assignment line " + std::to_string(line_no) + " is malformed");
        }
        a.tags.push_back(partition_from_string(line.substr(comma + 1)));
    }
    if (!header) throw Error(ErrorKind::value_error, kModule, "assignment has no header");
    a.unseen.assign(a.tags.size(), false);
    return a;
}

std::string dataset_hash(const Dataset& ds) { return sha256_hex(to_csv(ds)); }

SplitAssignment split_random_stratified(const Dataset& ds, const SplitSpec& spec) {
    auto a = blank(ds, spec);
    const auto& labels = labels_of(ds, spec.label_column);
    std::vector<std::size_t> all(ds.rows());
    std::iota(all.begin(), all.end(), 0);
    std::mt19937_64 rng(spec.seed);
    stratify(labels, all, spec, rng, a.tags);
    return a;
}

SplitAssignment split_temporal(const Dataset& ds, const SplitSpec& spec) {
    auto a = blank(ds, spec);
    const auto t = time_values(ds, spec.time_key);
    std::vector<std::size_t> order(ds.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return t[x] < t[y]; });
    assign_in_order(order, apportion(ds.rows(), spec), a.tags);
    return a;
}

SplitAssignment split_disjoint(const Dataset& ds, const SplitSpec& spec) {
    auto a = blank(ds, spec);
    if (!ds.has(spec.group_key)) {
        throw Error(ErrorKind::config_error, kModule, "missing group column '" + spec.group_key + "'");
    }
    const auto& col = ds.column(spec.group_key);
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < ds.rows(); ++r) groups[col.cell(r)].push_back(r);
    if (groups.size() < 3) {
        throw Error(ErrorKind::config_error, kModule,
                    "disjoint split needs at least 3 distinct '" + spec.group_key + "' values, found " +
                        std::to_string(groups.size()));
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [_, rows] : groups) order.push_back(&rows);
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [](auto x, auto y) { return x->size() > y->size(); });

    const double n = static_cast<double>(ds.rows());
    std::array<double, 3> deficit = {spec.train * n, spec.val * n, spec.test * n};
    for (const auto* rows : order) {
        const auto best = static_cast<std::size_t>(std::max_element(deficit.begin(), deficit.end()) - deficit.begin());
        for (auto r : *rows) a.tags[r] = kParts[best];
        deficit[best] -= static_cast<double>(rows->size());
    }
    return a;
}

SplitAssignment split_ood(const Dataset& ds, const SplitSpec& spec) {
    auto a = blank(ds, spec);
    const auto& labels = labels_of(ds, spec.label_column);
    const std::set<std::string> held(spec.held_out_classes.begin(), spec.held_out_classes.end());
    const std::set<std::string> present(labels.begin(), labels.end());
    for (const auto& h : held) {
        if (!present.count(h)) throw Error(ErrorKind::config_error, kModule, "held-out class '" + h + "' not present");
    }
    if (std::includes(held.begin(), held.end(), present.begin(), present.end())) {
        throw Error(ErrorKind::config_error, kModule, "held-out classes cover every class");
    }
    std::vector<std::size_t> known;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        if (held.count(labels[r])) {
            a.tags[r] = Partition::test;
            a.unseen[r] = true;
        } else {
            known.push_back(r);
        }
    }
    std::mt19937_64 rng(spec.seed);
    stratify(labels, known, spec, rng, a.tags);
    return a;
}

SplitAssignment split(const Dataset& ds, const SplitSpec& spec) {
    switch (spec.strategy) {
        case Strategy::random_stratified: return split_random_stratified(ds, spec);
        case Strategy::temporal: return split_temporal(ds, spec);
        case Strategy::disjoint: return split_disjoint(ds, spec);
        case Strategy::ood: return split_ood(ds, spec);
    }
    throw Error(ErrorKind::config_error, kModule, "unknown strategy");
}

std::string manifest_json(const Dataset& ds, const SplitAssignment& a, const SplitSpec& spec) {
    json j;
    j["strategy"] = to_string(spec.strategy);
    j["fractions"] = {{"train", spec.train}, {"val", spec.val}, {"test", spec.test}};
    j["seed"] = spec.seed;
    if (spec.strategy == Strategy::disjoint) j["group_key"] = spec.group_key;
    if (spec.strategy == Strategy::temporal) j["time_key"] = spec.time_key;
    if (spec.strategy == Strategy::ood) j["held_out_classes"] = spec.held_out_classes;
    j["dataset_hash"] = a.dataset_hash;
    const double n = static_cast<double>(std::max<std::size_t>(a.tags.size(), 1));
    const bool labeled = ds.has(spec.label_column);
    for (auto p : kParts) {
        const auto name = std::string(to_string(p));
        j["counts"][name] = a.count(p);
        j["realized_fractions"][name] = static_cast<double>(a.count(p)) / n;
        j["fingerprints"][name] = a.fingerprint(p);
        if (labeled) {
            std::map<std::string, std::size_t> dist;
            for (auto r : a.rows(p)) ++dist[ds.column(spec.label_column).cell(r)];
            j["class_distribution"][name] = json::object();
            for (const auto& [cls, c] : dist) j["class_distribution"][name][cls] = c;
        }
    }
    if (spec.strategy == Strategy::ood) {
        j["test_unseen_rows"] = static_cast<std::size_t>(std::count(a.unseen.begin(), a.unseen.end(), true));
        j["test_known_rows"] = a.count(Partition::test) - j["test_unseen_rows"].get<std::size_t>();
    }
    return j.dump(2);
}

SplitAssignment design_set(const SplitAssignment& a) {
    SplitAssignment d = a;
    for (auto& t : d.tags) {
        if (t == Partition::test) t = Partition::excluded;
    }
    return d;
}

std::vector<SplitAssignment> kfold(const Dataset& ds, const SplitAssignment& design, std::size_t k,
                                   std::uint64_t seed, const std::string& label_column, bool allow_temporal) {
    if (k < 2) throw Error(ErrorKind::config_error, kModule, "k-fold needs k >= 2");
    if (design.count(Partition::test) > 0) {
        throw Error(ErrorKind::leakage_error, kModule, "design set contains test-tagged rows");
    }
    if (design.strategy == Strategy::temporal && !allow_temporal) {
        throw Error(ErrorKind::config_error, kModule,
                    "random k-fold over a temporal split breaks chronological order; set allow_temporal to override");
    }
    if (design.tags.size() != ds.rows()) {
        throw Error(ErrorKind::lineage_error, kModule, "assignment does not match dataset row count");
    }
    std::map<std::string, std::vector<std::size_t>> strata;
    const bool labeled = ds.has(label_column);
    std::size_t n_design = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        if (design.tags[r] == Partition::excluded) continue;
        ++n_design;
        strata[labeled ? ds.column(label_column).cell(r) : std::string()].push_back(r);
    }
    if (n_design < k) {
        throw Error(ErrorKind::config_error, kModule,
                    "k-fold with k=" + std::to_string(k) + " needs at least k design rows");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> fold_of(ds.rows(), k);
    std::size_t next = 0;
    for (auto& [_, rows] : strata) {
        std::shuffle(rows.begin(), rows.end(), rng);
        for (auto r : rows) fold_of[r] = next++ % k;
    }
    std::vector<SplitAssignment> folds;
    for (std::size_t f = 0; f < k; ++f) {
        SplitAssignment a = design;
        a.fold = static_cast<int>(f);
        for (std::size_t r = 0; r < ds.rows(); ++r) {
            if (fold_of[r] == k) a.tags[r] = Partition::excluded;
            else a.tags[r] = fold_of[r] == f ? Partition::val : Partition::train;
        }
        folds.push_back(std::move(a));
    }
    return folds;
}

PartitionData take(const Dataset& ds, const SplitAssignment& a, Partition p) {
    if (a.tags.size() != ds.rows()) {
        throw Error(ErrorKind::lineage_error, kModule,
                    "assignment has " + std::to_string(a.tags.size()) + " rows, dataset has " +
                        std::to_string(ds.rows()));
    }
    if (a.dataset_hash != dataset_hash(ds)) {
        throw Error(ErrorKind::lineage_error, kModule, "assignment was produced for a different dataset");
    }
    PartitionData pd;
    pd.tag = p;
    pd.row_ids = a.rows(p);
    pd.data = ds.select_rows(pd.row_ids);
    pd.fingerprint = a.fingerprint(p);
    pd.train_fingerprint = a.fingerprint(Partition::train);
    return pd;
}

PartitionData unpartitioned(const Dataset& ds) {
    PartitionData pd;
    pd.data = ds;
    pd.tag = Partition::excluded;
    pd.row_ids.resize(ds.rows());
    std::iota(pd.row_ids.begin(), pd.row_ids.end(), 0);
    pd.fingerprint = sha256_hex(dataset_hash(ds) + "|all");
    return pd;
}

void require_train(const PartitionData& pd, std::string_view what) {
    if (pd.tag != Partition::train) {
        throw Error(ErrorKind::leakage_error, kModule,
                    std::string(what) + " may only run on the train partition, got " + std::string(to_string(pd.tag)));
    }
}

}  // namespace flowcls::partition
