#include "flowcls/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "flowcls/error.hpp"
#include "flowcls/hash.hpp"
#include "flowcls/linalg.hpp"
#include "flowcls/version.hpp"

namespace flowcls::transforms {

namespace {

constexpr std::string_view kModule = "transforms";
using partition::Partition;

[[noreturn]] void mismatch(const std::string& what) { throw Error(ErrorKind::transform_mismatch, kModule, what); }

std::vector<double>& numeric_col(Dataset& ds, const std::string& name) {
    auto i = ds.index_of(name);
    if (!i) mismatch("column '" + name + "' was present at fit time but is missing");
    auto& c = ds.column(name);
    if (c.spec.is_text()) mismatch("column '" + name + "' was numeric at fit time");
    return c.numbers;
}

const std::vector<double>& numeric_col(const Dataset& ds, const std::string& name) {
    return numeric_col(const_cast<Dataset&>(ds), name);
}

std::vector<double> present_sorted(const std::vector<double>& xs) {
    std::vector<double> v;
    v.reserve(xs.size());
    for (double x : xs) {
        if (!std::isnan(x)) v.push_back(x);
    }
    std::sort(v.begin(), v.end());
    return v;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    double sum = 0;
    std::size_t n = 0;
    for (double x : xs) {
        if (!std::isnan(x)) {
            sum += x;
            ++n;
        }
    }
    mean = n ? sum / static_cast<double>(n) : 0.0;
    double ss = 0;
    for (double x : xs) {
        if (!std::isnan(x)) ss += (x - mean) * (x - mean);
    }
    sd = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
}

std::vector<std::string> resolve_columns(const Dataset& ds, std::vector<std::string> columns) {
    if (columns.empty()) columns = continuous_columns(ds);
    for (const auto& c : columns) numeric_col(ds, c);
    return columns;
}

std::string rows_fingerprint(const PartitionData& pd) {
    std::string text = pd.fingerprint;
    for (auto r : pd.row_ids) {
        text += ',';
        text += r == partition::kSyntheticRow ? std::string("s") : std::to_string(r);
    }
    return sha256_hex(text);
}

FittedTransform start(Kind kind, const PartitionData& train) {
    partition::require_train(train, std::string("fitting ") + std::string(to_string(kind)));
    FittedTransform t;
    t.kind = kind;
    t.fit_fingerprint = train.train_fingerprint;
    t.fit_rows_fingerprint = rows_fingerprint(train);
    return t;
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    if (j.contains(key)) out = j.at(key).get<std::vector<std::string>>();
    return out;
}

Dataset keep_rows(const Dataset& ds, const std::vector<bool>& keep, std::vector<std::size_t>* row_ids) {
    std::vector<std::size_t> idx;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        if (keep[r]) idx.push_back(r);
    }
    if (row_ids) {
        std::vector<std::size_t> ids;
        for (auto r : idx) ids.push_back((*row_ids)[r]);
        *row_ids = std::move(ids);
    }
    return ds.select_rows(idx);
}

std::map<std::string, std::vector<std::size_t>> rows_by_class(const Dataset& ds, const std::string& label) {
    if (!ds.has(label)) throw Error(ErrorKind::config_error, kModule, "missing label column '" + label + "'");
    std::map<std::string, std::vector<std::size_t>> out;
    const auto& col = ds.column(label);
    for (std::size_t r = 0; r < ds.rows(); ++r) out[col.cell(r)].push_back(r);
    return out;
}

Dataset undersample_rows(const Dataset& ds, double ratio, std::uint64_t seed, const std::string& label,
                         std::vector<std::size_t>* row_ids, ApplyStats* stats) {
    if (!(ratio >= 1)) throw Error(ErrorKind::config_error, kModule, "undersample ratio must be >= 1");
    auto classes = rows_by_class(ds, label);
    if (classes.empty()) return ds;
    std::size_t minority = SIZE_MAX;
    for (const auto& [_, rows] : classes) minority = std::min(minority, rows.size());
    const auto cap = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(minority)));
    std::mt19937_64 rng(seed);
    std::vector<bool> keep(ds.rows(), true);
    for (auto& [_, rows] : classes) {
        if (rows.size() <= cap) continue;
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t i = cap; i < rows.size(); ++i) keep[rows[i]] = false;
    }
    const auto removed = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
    if (stats) stats->removed_rows += removed;
    return keep_rows(ds, keep, row_ids);
}

Dataset smote_rows(const Dataset& ds, std::size_t k, std::uint64_t seed, const std::string& label,
                   std::vector<std::size_t>* row_ids, ApplyStats* stats) {
    if (k < 1) throw Error(ErrorKind::config_error, kModule, "smote needs k >= 1");
    auto classes = rows_by_class(ds, label);
    std::size_t majority = 0;
    for (const auto& [_, rows] : classes) majority = std::max(majority, rows.size());
    const auto cols = continuous_columns(ds);
    std::vector<const std::vector<double>*> feats;
    for (const auto& c : cols) {
        feats.push_back(&ds.numeric(c));
        for (double x : *feats.back()) {
            if (std::isnan(x)) throw Error(ErrorKind::value_error, kModule, "smote: column '" + c + "' has missing values");
        }
    }
    auto dist2 = [&](std::size_t a, std::size_t b) {
        double s = 0;
        for (const auto* f : feats) {
            const double d = (*f)[a] - (*f)[b];
            s += d * d;
        }
        return s;
    };

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> seeds;
    std::vector<std::size_t> partners;
    std::vector<double> lambdas;
    for (const auto& [cls, rows] : classes) {
        if (rows.size() == majority) continue;
        if (rows.size() <= k) {
            throw Error(ErrorKind::config_error, kModule,
                        "smote: class '" + cls + "' has " + std::to_string(rows.size()) +
                            " rows, which must exceed k=" + std::to_string(k) + "; choose a smaller k");
        }
        // k nearest same-class neighbours of every member; ties to the lower row.
        std::vector<std::vector<std::size_t>> nn(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<std::pair<double, std::size_t>> cand;
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (j != i) cand.emplace_back(dist2(rows[i], rows[j]), rows[j]);
            }
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
            for (std::size_t m = 0; m < k; ++m) nn[i].push_back(cand[m].second);
        }
        std::uniform_int_distribution<std::size_t> pick_seed(0, rows.size() - 1), pick_nn(0, k - 1);
        std::uniform_real_distribution<double> lambda(0.0, 1.0);
        for (std::size_t s = rows.size(); s < majority; ++s) {
            const std::size_t i = pick_seed(rng);
            seeds.push_back(rows[i]);
            partners.push_back(nn[i][pick_nn(rng)]);
            lambdas.push_back(lambda(rng));
        }
    }
    if (seeds.empty()) return ds;
    Dataset synth = ds.select_rows(seeds);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        auto& out = synth.column(cols[c]).numbers;
        const auto& src = *feats[c];
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            out[s] = src[seeds[s]] + lambdas[s] * (src[partners[s]] - src[seeds[s]]);
        }
    }
    Dataset out = ds;
    out.append_rows(synth);
    if (row_ids) row_ids->insert(row_ids->end(), seeds.size(), partition::kSyntheticRow);
    if (stats) stats->synthetic_rows += seeds.size();
    return out;
}

FittedTransform fit_scaler(Kind kind, const PartitionData& train, std::vector<std::string> columns) {
    auto t = start(kind, train);
    columns = resolve_columns(train.data, std::move(columns));
    json& p = t.params;
    p["columns"] = columns;
    for (const auto& c : columns) {
        const auto& xs = train.data.numeric(c);
        if (kind == Kind::standard) {
            double mean = 0, sd = 0;
            mean_std(xs, mean, sd);
            p["mean"].push_back(mean);
            p["std"].push_back(sd);
            if (sd == 0) t.warnings.push_back("column '" + c + "' has zero standard deviation; passed through");
        } else {
            const auto v = present_sorted(xs);
            if (kind == Kind::minmax) {
                const double lo = v.empty() ? 0.0 : v.front(), hi = v.empty() ? 0.0 : v.back();
                p["min"].push_back(lo);
                p["max"].push_back(hi);
                if (hi == lo) t.warnings.push_back("column '" + c + "' is constant; mapped to 0");
            } else {
                const double q1 = v.empty() ? 0.0 : quantile(v, 0.25);
                const double q2 = v.empty() ? 0.0 : quantile(v, 0.5);
                const double q3 = v.empty() ? 0.0 : quantile(v, 0.75);
                p["q1"].push_back(q1);
                p["q2"].push_back(q2);
                p["q3"].push_back(q3);
                if (q3 == q1) t.warnings.push_back("column '" + c + "' has zero IQR; passed through");
            }
        }
    }
    return t;
}

FittedTransform fit_outlier(Kind kind, const PartitionData& train, double param, std::vector<std::string> columns) {
    auto t = start(kind, train);
    if (!(param >= 0)) throw Error(ErrorKind::config_error, kModule, "outlier threshold must be >= 0");
    columns = resolve_columns(train.data, std::move(columns));
    json& p = t.params;
    p["columns"] = columns;
    p[kind == Kind::zscore_outlier ? "threshold" : "multiplier"] = param;
    for (const auto& c : columns) {
        const auto& xs = train.data.numeric(c);
        double lo = 0, hi = 0;
        if (kind == Kind::zscore_outlier) {
            double mean = 0, sd = 0;
            mean_std(xs, mean, sd);
            lo = mean - param * sd;
            hi = mean + param * sd;
        } else {
            const auto v = present_sorted(xs);
            const double q1 = v.empty() ? 0.0 : quantile(v, 0.25);
            const double q3 = v.empty() ? 0.0 : quantile(v, 0.75);
            lo = q1 - param * (q3 - q1);
            hi = q3 + param * (q3 - q1);
        }
        p["lower"].push_back(lo);
        p["upper"].push_back(hi);
    }
    return t;
}

}  // namespace

std::string_view to_string(Kind k) noexcept {
    switch (k) {
        case Kind::standard: return "standard";
        case Kind::minmax: return "minmax";
        case Kind::robust: return "robust";
        case Kind::onehot: return "onehot";
        case Kind::portbin: return "portbin";
        case Kind::zscore_outlier: return "zscore_outlier";
        case Kind::iqr_outlier: return "iqr_outlier";
        case Kind::undersample: return "undersample";
        case Kind::smote: return "smote";
        case Kind::pca: return "pca";
    }
    return "?";
}

Kind kind_from_string(std::string_view s) {
    for (auto k : {Kind::standard, Kind::minmax, Kind::robust, Kind::onehot, Kind::portbin, Kind::zscore_outlier,
                   Kind::iqr_outlier, Kind::undersample, Kind::smote, Kind::pca}) {
        if (to_string(k) == s) return k;
    }
    throw Error(ErrorKind::config_error, kModule, "unknown transform kind '" + std::string(s) + "'");
}

bool is_train_only(Kind k) noexcept {
    return k == Kind::zscore_outlier || k == Kind::iqr_outlier || k == Kind::undersample || k == Kind::smote;
}

double quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw Error(ErrorKind::value_error, kModule, "quantile of empty sample");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::string> continuous_columns(const Dataset& ds) {
    std::set<std::string> flags;
    for (const auto& c : ds.columns()) {
        if (!c.spec.validity_flag.empty()) flags.insert(c.spec.validity_flag);
    }
    std::vector<std::string> out;
    for (const auto& c : ds.columns()) {
        if (c.spec.kind != ColumnKind::numeric) continue;
        if (c.spec.name.find('=') != std::string::npos || flags.count(c.spec.name)) continue;
        out.push_back(c.spec.name);
    }
    return out;
}

std::string_view to_string(PortClass c) noexcept {
    switch (c) {
        case PortClass::well_known: return "well_known";
        case PortClass::registered: return "registered";
        case PortClass::dynamic: return "dynamic";
    }
    return "?";
}

PortClass bin_port(double port) {
    if (!(port >= 0 && port <= 65535) || port != std::floor(port)) {
        throw Error(ErrorKind::value_error, kModule, "port value out of range: " + format_number(port));
    }
    if (port <= 1023) return PortClass::well_known;
    if (port <= 49151) return PortClass::registered;
    return PortClass::dynamic;
}

FittedTransform fit_standard(const PartitionData& train, std::vector<std::string> columns) {
    return fit_scaler(Kind::standard, train, std::move(columns));
}
FittedTransform fit_minmax(const PartitionData& train, std::vector<std::string> columns) {
    return fit_scaler(Kind::minmax, train, std::move(columns));
}
FittedTransform fit_robust(const PartitionData& train, std::vector<std::string> columns) {
    return fit_scaler(Kind::robust, train, std::move(columns));
}

FittedTransform fit_onehot(const PartitionData& train, std::vector<std::string> columns) {
    auto t = start(Kind::onehot, train);
    if (columns.empty()) columns = train.data.names_of(ColumnKind::categorical);
    t.params["columns"] = columns;
    t.params["vocabulary"] = json::array();
    for (const auto& c : columns) {
        if (!train.data.has(c) || train.data.column(c).spec.kind != ColumnKind::categorical) {
            throw Error(ErrorKind::config_error, kModule, "onehot: '" + c + "' is not a categorical column");
        }
        std::set<std::string> vocab;
        for (const auto& v : train.data.text(c)) {
            if (!v.empty()) vocab.insert(v);
        }
        t.params["vocabulary"].push_back(std::vector<std::string>(vocab.begin(), vocab.end()));
    }
    return t;
}

FittedTransform fit_zscore_outlier(const PartitionData& train, double threshold, std::vector<std::string> columns) {
    return fit_outlier(Kind::zscore_outlier, train, threshold, std::move(columns));
}

FittedTransform fit_iqr_outlier(const PartitionData& train, double multiplier, std::vector<std::string> columns) {
    return fit_outlier(Kind::iqr_outlier, train, multiplier, std::move(columns));
}

FittedTransform fit_pca(const PartitionData& train, std::size_t n_components, std::vector<std::string> columns) {
    auto t = start(Kind::pca, train);
    if (columns.empty()) columns = train.data.names_of(ColumnKind::numeric);
    for (const auto& c : columns) numeric_col(train.data, c);
    const std::size_t p = columns.size();
    if (n_components < 1 || n_components > p) {
        throw Error(ErrorKind::config_error, kModule,
                    "pca: n_components=" + std::to_string(n_components) + " must lie in [1, " + std::to_string(p) + "]");
    }
    const std::size_t n = train.data.rows();
    if (n == 0) throw Error(ErrorKind::fit_error, kModule, "pca: empty training partition");
    std::vector<double> mean(p, 0.0);
    std::vector<const std::vector<double>*> cols;
    for (std::size_t j = 0; j < p; ++j) {
        cols.push_back(&train.data.numeric(columns[j]));
        for (double x : *cols[j]) {
            if (std::isnan(x)) throw Error(ErrorKind::value_error, kModule, "pca: column '" + columns[j] + "' has missing values");
            mean[j] += x;
        }
        mean[j] /= static_cast<double>(n);
    }
    linalg::Matrix cov(p, p);
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a; b < p; ++b) {
            double s = 0;
            for (std::size_t r = 0; r < n; ++r) s += ((*cols[a])[r] - mean[a]) * ((*cols[b])[r] - mean[b]);
            cov(a, b) = cov(b, a) = s / static_cast<double>(n);
        }
    }
    const auto eig = linalg::jacobi_eigen(cov);
    double total = 0;
    for (double v : eig.values) total += std::max(v, 0.0);
    json& j = t.params;
    j["columns"] = columns;
    j["n_components"] = n_components;
    j["mean"] = mean;
    j["eigenvalues"] = eig.values;
    j["explained_variance_ratio"] = json::array();
    for (double v : eig.values) j["explained_variance_ratio"].push_back(total > 0 ? std::max(v, 0.0) / total : 0.0);
    j["components"] = json::array();
    for (std::size_t k = 0; k < n_components; ++k) {
        std::vector<double> comp(p);
        for (std::size_t a = 0; a < p; ++a) comp[a] = eig.vectors(a, k);
        j["components"].push_back(comp);
    }
    j["sweeps"] = eig.sweeps;
    return t;
}

PartitionData undersample(const PartitionData& train, double ratio, std::uint64_t seed, const std::string& label) {
    partition::require_train(train, "undersampling");
    PartitionData out = train;
    out.data = undersample_rows(train.data, ratio, seed, label, &out.row_ids, nullptr);
    return out;
}

PartitionData smote(const PartitionData& train, std::size_t k, std::uint64_t seed, const std::string& label) {
    partition::require_train(train, "smote");
    PartitionData out = train;
    out.data = smote_rows(train.data, k, seed, label, &out.row_ids, nullptr);
    return out;
}

FittedTransform fit(const json& spec, const PartitionData& train) {
    if (!spec.is_object() || !spec.contains("kind")) {
        throw Error(ErrorKind::config_error, kModule, "transform step needs a 'kind'");
    }
    const Kind kind = kind_from_string(spec.at("kind").get<std::string>());
    static const std::map<Kind, std::set<std::string>> allowed = {
        {Kind::standard, {"columns"}},
        {Kind::minmax, {"columns"}},
        {Kind::robust, {"columns"}},
        {Kind::onehot, {"columns"}},
        {Kind::portbin, {"column", "output", "replace"}},
        {Kind::zscore_outlier, {"columns", "threshold"}},
        {Kind::iqr_outlier, {"columns", "multiplier"}},
        {Kind::undersample, {"ratio", "seed", "label"}},
        {Kind::smote, {"k", "seed", "label"}},
        {Kind::pca, {"columns", "n_components"}},
    };
    for (const auto& [key, _] : spec.items()) {
        if (key != "kind" && !allowed.at(kind).count(key)) {
            throw Error(ErrorKind::config_error, kModule,
                        "unknown option '" + key + "' for transform '" + std::string(to_string(kind)) + "'");
        }
    }
    const auto columns = string_list(spec, "columns");
    try {
        switch (kind) {
            case Kind::standard: return fit_standard(train, columns);
            case Kind::minmax: return fit_minmax(train, columns);
            case Kind::robust: return fit_robust(train, columns);
            case Kind::onehot: return fit_onehot(train, columns);
            case Kind::zscore_outlier: return fit_zscore_outlier(train, spec.value("threshold", 3.0), columns);
            case Kind::iqr_outlier: return fit_iqr_outlier(train, spec.value("multiplier", 1.5), columns);
            case Kind::pca: {
                if (!spec.contains("n_components")) throw Error(ErrorKind::config_error, kModule, "pca needs n_components");
                return fit_pca(train, spec.at("n_components").get<std::size_t>(), columns);
            }
            case Kind::portbin: {
                auto t = start(kind, train);
                const std::string col = spec.value("column", std::string("dst_port"));
                numeric_col(train.data, col);
                t.params["column"] = col;
                t.params["output"] = spec.value("output", col + "_bin");
                t.params["replace"] = spec.value("replace", false);
                return t;
            }
            case Kind::undersample: {
                auto t = start(kind, train);
                t.params["ratio"] = spec.value("ratio", 1.0);
                t.params["seed"] = spec.value("seed", std::uint64_t{42});
                t.params["label"] = spec.value("label", std::string("label"));
                if (!(t.params["ratio"].get<double>() >= 1)) {
                    throw Error(ErrorKind::config_error, kModule, "undersample ratio must be >= 1");
                }
                return t;
            }
            case Kind::smote: {
                auto t = start(kind, train);
                t.params["k"] = spec.value("k", std::size_t{5});
                t.params["seed"] = spec.value("seed", std::uint64_t{42});
                t.params["label"] = spec.value("label", std::string("label"));
                return t;
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config_error, kModule, std::string("bad option type: ") + e.what());
    }
    throw Error(ErrorKind::config_error, kModule, "unhandled transform kind");
}

Dataset FittedTransform::apply(const Dataset& ds, ApplyStats* stats, std::vector<std::size_t>* row_ids) const {
    const json& p = params;
    switch (kind) {
        case Kind::standard:
        case Kind::minmax:
        case Kind::robust: {
            Dataset out = ds;
            const auto cols = p.at("columns").get<std::vector<std::string>>();
            for (std::size_t i = 0; i < cols.size(); ++i) {
                double center = 0, scale = 0;
                if (kind == Kind::standard) {
                    center = p["mean"][i].get<double>();
                    scale = p["std"][i].get<double>();
                } else if (kind == Kind::minmax) {
                    center = p["min"][i].get<double>();
                    scale = p["max"][i].get<double>() - center;
                } else {
                    center = p["q2"][i].get<double>();
                    scale = p["q3"][i].get<double>() - p["q1"][i].get<double>();
                }
                for (double& x : numeric_col(out, cols[i])) {
                    if (std::isnan(x)) continue;
                    if (scale != 0) x = (x - center) / scale;
                    else if (kind == Kind::minmax) x = 0.0;
                }
            }
            return out;
        }
        case Kind::onehot: {
            Dataset out = ds;
            const auto cols = p.at("columns").get<std::vector<std::string>>();
            for (std::size_t i = 0; i < cols.size(); ++i) {
                if (!out.has(cols[i]) || !out.column(cols[i]).spec.is_text()) {
                    mismatch("categorical column '" + cols[i] + "' is missing");
                }
                const auto values = out.text(cols[i]);
                const auto vocab = p["vocabulary"][i].get<std::vector<std::string>>();
                std::vector<std::vector<double>> enc(vocab.size(), std::vector<double>(values.size(), 0.0));
                for (std::size_t r = 0; r < values.size(); ++r) {
                    auto it = std::lower_bound(vocab.begin(), vocab.end(), values[r]);
                    if (it != vocab.end() && *it == values[r]) {
                        enc[static_cast<std::size_t>(it - vocab.begin())][r] = 1.0;
                    } else if (!values[r].empty() && stats) {
                        ++stats->unseen_categories;
                    }
                }
                out.drop_column(cols[i]);
                for (std::size_t v = 0; v < vocab.size(); ++v) out.add_numeric(cols[i] + "=" + vocab[v], std::move(enc[v]));
            }
            return out;
        }
        case Kind::portbin: {
            Dataset out = ds;
            const auto col = p.at("column").get<std::string>();
            const auto& ports = numeric_col(out, col);
            std::vector<std::string> bins(ports.size());
            for (std::size_t r = 0; r < ports.size(); ++r) bins[r] = std::string(to_string(bin_port(ports[r])));
            const auto output = p.at("output").get<std::string>();
            if (out.has(output)) out.drop_column(output);
            if (p.at("replace").get<bool>()) out.drop_column(col);
            out.add_text(output, ColumnKind::categorical, std::move(bins));
            return out;
        }
        case Kind::zscore_outlier:
        case Kind::iqr_outlier: {
            const auto cols = p.at("columns").get<std::vector<std::string>>();
            std::vector<bool> keep(ds.rows(), true);
            for (std::size_t i = 0; i < cols.size(); ++i) {
                const double lo = p["lower"][i].get<double>(), hi = p["upper"][i].get<double>();
                const auto& xs = numeric_col(ds, cols[i]);
                for (std::size_t r = 0; r < xs.size(); ++r) {
                    if (!std::isnan(xs[r]) && (xs[r] < lo || xs[r] > hi)) keep[r] = false;
                }
            }
            if (stats) stats->removed_rows += static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
            return keep_rows(ds, keep, row_ids);
        }
        case Kind::undersample:
            return undersample_rows(ds, p.at("ratio").get<double>(), p.at("seed").get<std::uint64_t>(),
                                    p.at("label").get<std::string>(), row_ids, stats);
        case Kind::smote:
            return smote_rows(ds, p.at("k").get<std::size_t>(), p.at("seed").get<std::uint64_t>(),
                              p.at("label").get<std::string>(), row_ids, stats);
        case Kind::pca: {
            const auto cols = p.at("columns").get<std::vector<std::string>>();
            const auto mean = p.at("mean").get<std::vector<double>>();
            const auto comps = p.at("components").get<std::vector<std::vector<double>>>();
            std::vector<const std::vector<double>*> xs;
            for (const auto& c : cols) xs.push_back(&numeric_col(ds, c));
            Dataset out = ds;
            for (const auto& c : cols) out.drop_column(c);
            for (std::size_t k = 0; k < comps.size(); ++k) {
                std::vector<double> z(ds.rows(), 0.0);
                for (std::size_t r = 0; r < ds.rows(); ++r) {
                    for (std::size_t a = 0; a < cols.size(); ++a) z[r] += comps[k][a] * ((*xs[a])[r] - mean[a]);
                }
                out.add_numeric("pc" + std::to_string(k + 1), std::move(z));
            }
            return out;
        }
    }
    throw Error(ErrorKind::config_error, kModule, "unhandled transform kind");
}

PartitionData FittedTransform::apply(const PartitionData& pd, ApplyStats* stats) const {
    if (pd.train_fingerprint != fit_fingerprint) {
        throw Error(ErrorKind::lineage_error, kModule,
                    std::string(to_string(kind)) + " was fitted on a different train partition");
    }
    if (train_only() && pd.tag != Partition::train) {
        throw Error(ErrorKind::leakage_error, kModule,
                    std::string(to_string(kind)) + " may only run on the train partition, got " +
                        std::string(partition::to_string(pd.tag)));
    }
    PartitionData out = pd;
    out.data = apply(pd.data, stats, &out.row_ids);
    return out;
}

json FittedTransform::to_json() const {
    json j;
    j["kind"] = to_string(kind);
    j["params"] = params;
    j["fit_fingerprint"] = fit_fingerprint;
    j["fit_rows_fingerprint"] = fit_rows_fingerprint;
    j["warnings"] = warnings;
    return j;
}

FittedTransform FittedTransform::from_json(const json& j) {
    try {
        FittedTransform t;
        t.kind = kind_from_string(j.at("kind").get<std::string>());
        t.params = j.at("params");
        t.fit_fingerprint = j.at("fit_fingerprint").get<std::string>();
        t.fit_rows_fingerprint = j.value("fit_rows_fingerprint", std::string());
        t.warnings = j.value("warnings", std::vector<std::string>{});
        return t;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config_error, kModule, std::string("malformed fitted transform: ") + e.what());
    }
}

PartitionData FittedChain::apply(const PartitionData& pd, ApplyStats* stats) const {
    if (pd.train_fingerprint != fit_fingerprint) {
        throw Error(ErrorKind::lineage_error, kModule, "transform chain was fitted on a different train partition");
    }
    PartitionData cur = pd;
    for (const auto& step : steps) {
        if (step.train_only() && pd.tag != Partition::train) continue;
        cur = step.apply(cur, stats);
    }
    return cur;
}

std::string FittedChain::fingerprint() const { return sha256_hex(to_json().dump()); }

json FittedChain::to_json() const {
    json j;
    j["version"] = kToolVersion;
    j["fit_fingerprint"] = fit_fingerprint;
    j["steps"] = json::array();
    for (const auto& s : steps) j["steps"].push_back(s.to_json());
    return j;
}

FittedChain FittedChain::from_json(const json& j) {
    try {
        FittedChain c;
        c.fit_fingerprint = j.at("fit_fingerprint").get<std::string>();
        for (const auto& s : j.at("steps")) c.steps.push_back(FittedTransform::from_json(s));
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config_error, kModule, std::string("malformed transform chain: ") + e.what());
    }
}

ChainFit fit_chain(const json& steps, const PartitionData& train) {
    partition::require_train(train, "fitting a transform chain");
    if (!steps.is_array()) throw Error(ErrorKind::config_error, kModule, "transform chain must be a JSON array");
    ChainFit out;
    out.chain.fit_fingerprint = train.train_fingerprint;
    out.train = train;
    for (const auto& spec : steps) {
        auto step = fit(spec, out.train);
        out.train = step.apply(out.train);
        out.chain.steps.push_back(std::move(step));
    }
    return out;
}

}  // namespace flowcls::transforms
