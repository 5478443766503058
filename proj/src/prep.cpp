#include "flowcls/prep.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "flowcls/error.hpp"
#include "flowcls/net.hpp"

namespace flowcls::prep {

namespace {

constexpr std::string_view kModule = "prep";
using json = nlohmann::ordered_json;

const std::vector<double>* numeric_if(const Dataset& ds, const char* name) {
    auto i = ds.index_of(name);
    if (!i || ds.column(*i).spec.is_text()) return nullptr;
    return &ds.column(*i).numbers;
}

std::optional<std::int64_t> time_ns(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    return parse_seconds(cell).time_since_epoch().count();
}

double present_variance(const std::vector<double>& xs) {
    double sum = 0;
    std::size_t n = 0;
    for (double x : xs) {
        if (!std::isnan(x)) {
            sum += x;
            ++n;
        }
    }
    if (n == 0) return 0;
    const double mean = sum / static_cast<double>(n);
    double ss = 0;
    for (double x : xs) {
        if (!std::isnan(x)) ss += (x - mean) * (x - mean);
    }
    return ss / static_cast<double>(n);
}

std::string row_key(const Dataset& ds, std::size_t row) {
    std::string key;
    for (const auto& c : ds.columns()) {
        if (c.spec.kind == ColumnKind::metadata) continue;
        key += c.cell(row);
        key += '\x1f';
    }
    return key;
}

/// Rows repeating an earlier row on all non-metadata columns.
std::vector<bool> duplicate_mask(const Dataset& ds) {
    std::vector<bool> dup(ds.rows(), false);
    std::unordered_set<std::string> seen;
    seen.reserve(ds.rows());
    for (std::size_t r = 0; r < ds.rows(); ++r) dup[r] = !seen.insert(row_key(ds, r)).second;
    return dup;
}

struct PlausibilityRule {
    const char* id;
    std::vector<bool> (*evaluate)(const Dataset&);
};

std::vector<bool> negative_duration(const Dataset& ds) {
    std::vector<bool> bad(ds.rows(), false);
    for (const char* name : {"flow_duration", "fwd_duration", "bwd_duration"}) {
        if (const auto* col = numeric_if(ds, name)) {
            for (std::size_t r = 0; r < ds.rows(); ++r) bad[r] = bad[r] || (*col)[r] < 0;
        }
    }
    return bad;
}

std::vector<bool> zero_packets_with_bytes(const Dataset& ds) {
    std::vector<bool> bad(ds.rows(), false);
    const char* pairs[][2] = {{"fwd_packet_count", "fwd_byte_count"},
                              {"bwd_packet_count", "bwd_byte_count"},
                              {"total_packet_count", "total_byte_count"}};
    for (const auto& p : pairs) {
        const auto* pk = numeric_if(ds, p[0]);
        const auto* by = numeric_if(ds, p[1]);
        if (!pk || !by) continue;
        for (std::size_t r = 0; r < ds.rows(); ++r) bad[r] = bad[r] || ((*pk)[r] == 0 && (*by)[r] > 0);
    }
    return bad;
}

std::vector<bool> oversize(const Dataset& ds) {
    std::vector<bool> bad(ds.rows(), false);
    for (const char* name : {"fwd_size_max", "bwd_size_max"}) {
        if (const auto* col = numeric_if(ds, name)) {
            for (std::size_t r = 0; r < ds.rows(); ++r) bad[r] = bad[r] || (*col)[r] > 65535;
        }
    }
    return bad;
}

std::vector<bool> end_before_start(const Dataset& ds) {
    std::vector<bool> bad(ds.rows(), false);
    if (!ds.has("flow_start") || !ds.has("flow_end")) return bad;
    const auto& s = ds.column("flow_start");
    const auto& e = ds.column("flow_end");
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        auto a = time_ns(s.cell(r));
        auto b = time_ns(e.cell(r));
        bad[r] = a && b && *b < *a;
    }
    return bad;
}

const PlausibilityRule kRules[] = {
    {kNegativeDuration, negative_duration},
    {kZeroPacketsWithBytes, zero_packets_with_bytes},
    {kOversizePacket, oversize},
    {kEndBeforeStart, end_before_start},
};

std::vector<std::size_t> keep_rows(const std::vector<bool>& drop) {
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < drop.size(); ++r) {
        if (!drop[r]) keep.push_back(r);
    }
    return keep;
}

void drop_column_unlinking(Dataset& ds, const std::string& name) {
    ds.drop_column(name);
    for (std::size_t i = 0; i < ds.cols(); ++i) {
        auto& spec = ds.column(ds.column(i).spec.name).spec;
        if (spec.validity_flag == name) spec.validity_flag.clear();
    }
}

bool is_feature(const Column& c) { return c.spec.kind == ColumnKind::numeric || c.spec.kind == ColumnKind::categorical; }

double missing_fraction(const Column& c) {
    if (c.size() == 0) return 0;
    std::size_t miss = 0;
    for (std::size_t r = 0; r < c.size(); ++r) miss += c.missing(r);
    return static_cast<double>(miss) / static_cast<double>(c.size());
}

/// One pass of the fixed cleaning sequence.
std::size_t clean_pass(Dataset& ds, const CleaningConfig& cfg, std::size_t pass, std::vector<AuditEntry>& audit) {
    std::size_t dropped = 0;
    auto note = [&](const char* rule, std::string target, std::size_t count) {
        if (count == 0) return;
        audit.push_back({rule, std::move(target), count, pass});
        dropped += count;
    };

    for (const auto& name : cfg.drop_columns) {
        if (ds.has(name)) {
            drop_column_unlinking(ds, name);
            note("excluded_column", name, 1);
        }
    }

    std::vector<std::string> to_drop;
    for (const auto& c : ds.columns()) {
        if (is_feature(c) && missing_fraction(c) > cfg.missing_drop) to_drop.push_back(c.spec.name);
    }
    for (const auto& name : to_drop) {
        drop_column_unlinking(ds, name);
        note("missing_fraction", name, 1);
    }

    to_drop.clear();
    for (const auto& c : ds.columns()) {
        if (c.spec.kind == ColumnKind::numeric && ds.rows() > 0 && present_variance(c.numbers) <= cfg.variance_epsilon) {
            to_drop.push_back(c.spec.name);
        }
    }
    for (const auto& name : to_drop) {
        drop_column_unlinking(ds, name);
        note("near_zero_variance", name, 1);
    }

    auto drop_rows = [&](const char* rule, const std::vector<bool>& mask) {
        const auto keep = keep_rows(mask);
        const std::size_t n = ds.rows() - keep.size();
        if (n > 0) ds = ds.select_rows(keep);
        note(rule, "", n);
    };

    drop_rows("duplicate_row", duplicate_mask(ds));
    for (const auto& rule : kRules) drop_rows(rule.id, rule.evaluate(ds));

    if (ds.has("proto") && ds.has("syn_count") && ds.has("total_packet_count")) {
        const auto& proto = ds.column("proto");
        const auto* syn = numeric_if(ds, "syn_count");
        const auto* total = numeric_if(ds, "total_packet_count");
        if (syn && total) {
            std::vector<bool> mask(ds.rows(), false);
            for (std::size_t r = 0; r < ds.rows(); ++r) {
                const auto p = proto.cell(r);
                const bool tcp = p == "TCP" || p == "6";
                mask[r] = tcp && (*syn)[r] >= 1 && (*total)[r] < cfg.min_handshake_packets;
            }
            drop_rows("incomplete_handshake", mask);
        }
    }
    return dropped;
}

}  // namespace

const ColumnQuality& QualityReport::column(const std::string& name) const {
    for (const auto& c : columns) {
        if (c.name == name) return c;
    }
    throw Error(ErrorKind::config_error, kModule, "no quality entry for column '" + name + "'");
}

std::size_t QualityReport::plausibility_violations() const {
    std::size_t n = 0;
    for (const auto& [_, v] : plausibility) n += v;
    return n;
}

std::string QualityReport::to_json() const {
    json j;
    j["rows"] = rows;
    j["cols"] = cols;
    j["duplicate_rows"] = duplicate_rows;
    j["plausibility"] = json::object();
    for (const auto& [k, v] : plausibility) j["plausibility"][k] = v;
    j["columns"] = json::array();
    for (const auto& c : columns) {
        json cj;
        cj["name"] = c.name;
        cj["kind"] = to_string(c.kind);
        cj["missing_fraction"] = c.missing_fraction;
        cj["distinct"] = c.distinct;
        if (c.kind == ColumnKind::numeric) cj["variance"] = c.variance;
        j["columns"].push_back(std::move(cj));
    }
    return j.dump(2);
}

QualityReport diagnose(const Dataset& ds) {
    QualityReport rep;
    rep.rows = ds.rows();
    rep.cols = ds.cols();
    for (const auto& c : ds.columns()) {
        ColumnQuality q;
        q.name = c.spec.name;
        q.kind = c.spec.kind;
        q.missing_fraction = missing_fraction(c);
        std::unordered_set<std::string> distinct;
        for (std::size_t r = 0; r < c.size(); ++r) {
            if (!c.missing(r)) distinct.insert(c.cell(r));
        }
        q.distinct = distinct.size();
        if (c.spec.kind == ColumnKind::numeric) q.variance = present_variance(c.numbers);
        rep.columns.push_back(std::move(q));
    }
    const auto dup = duplicate_mask(ds);
    rep.duplicate_rows = static_cast<std::size_t>(std::count(dup.begin(), dup.end(), true));
    for (const auto& rule : kRules) {
        const auto mask = rule.evaluate(ds);
        rep.plausibility[rule.id] = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    }
    return rep;
}

void CleaningConfig::validate() const {
    if (!(missing_drop >= 0 && missing_drop <= 1)) {
        throw Error(ErrorKind::config_error, kModule, "missing_drop must lie in [0, 1]");
    }
    if (!(variance_epsilon >= 0)) throw Error(ErrorKind::config_error, kModule, "variance_epsilon must be >= 0");
    if (!(min_handshake_packets >= 0)) {
        throw Error(ErrorKind::config_error, kModule, "min_handshake_packets must be >= 0");
    }
}

std::size_t CleanResult::total_dropped_rows() const {
    std::size_t n = 0;
    for (const auto& a : audit) {
        if (a.target.empty()) n += a.count;
    }
    return n;
}

std::string CleanResult::audit_jsonl() const {
    std::string out;
    for (const auto& a : audit) {
        json j;
        j["pass"] = a.pass;
        j["rule"] = a.rule;
        j["target"] = a.target;
        j["count"] = a.count;
        out += j.dump();
        out += '\n';
    }
    return out;
}

CleanResult clean(const Dataset& ds, const CleaningConfig& cfg) {
    cfg.validate();
    const auto label = ds.label_column();
    if (label) {
        for (const auto& name : cfg.drop_columns) {
            if (name == *label) {
                throw Error(ErrorKind::config_error, kModule, "refusing to drop label column '" + name + "'");
            }
        }
    }
    CleanResult res{ds, {}};
    for (std::size_t pass = 1;; ++pass) {
        if (clean_pass(res.data, cfg, pass, res.audit) == 0) break;
    }
    return res;
}

Dataset engineer_stateless(const Dataset& ds) {
    const char* sources[] = {"fwd_packet_count", "bwd_packet_count", "fwd_byte_count", "bwd_byte_count",
                             "flow_duration"};
    for (const char* s : sources) {
        if (!numeric_if(ds, s)) {
            throw Error(ErrorKind::config_error, kModule, std::string("missing numeric source column '") + s + "'");
        }
    }
    const auto& fp = ds.numeric("fwd_packet_count");
    const auto& bp = ds.numeric("bwd_packet_count");
    const auto& fb = ds.numeric("fwd_byte_count");
    const auto& bb = ds.numeric("bwd_byte_count");
    const auto& dur = ds.numeric("flow_duration");
    const std::size_t n = ds.rows();

    Dataset out = ds;
    auto add = [&](const char* name, auto&& fn) {
        if (out.has(name)) return;
        std::vector<double> v(n);
        for (std::size_t r = 0; r < n; ++r) v[r] = fn(r);
        out.add_numeric(name, std::move(v));
    };
    add("total_packet_count", [&](std::size_t r) { return fp[r] + bp[r]; });
    add("total_byte_count", [&](std::size_t r) { return fb[r] + bb[r]; });
    add("packet_ratio", [&](std::size_t r) { return fp[r] / std::max(bp[r], 1.0); });
    add("byte_ratio", [&](std::size_t r) { return fb[r] / std::max(bb[r], 1.0); });
    add("bytes_per_packet", [&](std::size_t r) {
        const double t = fp[r] + bp[r];
        return t > 0 ? (fb[r] + bb[r]) / t : 0.0;
    });
    add("packets_per_second", [&](std::size_t r) { return dur[r] > 0 ? (fp[r] + bp[r]) / dur[r] : 0.0; });
    return out;
}

void StatefulConfig::validate() const {
    if (!(window_seconds > 0)) throw Error(ErrorKind::config_error, kModule, "window_seconds must be > 0");
}

std::vector<std::string> stateful_columns(const StatefulConfig& cfg) {
    std::vector<std::string> names = {"src_active_flows", "src_new_flow_rate", "src_distinct_dst_ports"};
    if (cfg.service_features) {
        names.push_back("svc_active_flows");
        names.push_back("svc_distinct_src");
    }
    return names;
}

namespace {

/// Sliding multiset of (time, value) events for one key.
struct Window {
    std::deque<std::pair<std::int64_t, std::string>> events;
    std::unordered_map<std::string, std::size_t> counts;

    void evict_before(std::int64_t lo) {
        while (!events.empty() && events.front().first < lo) {
            auto it = counts.find(events.front().second);
            if (--it->second == 0) counts.erase(it);
            events.pop_front();
        }
    }
    void push(std::int64_t t, std::string v) {
        ++counts[v];
        events.emplace_back(t, std::move(v));
    }
};

}  // namespace

Dataset engineer_stateful(const Dataset& ds, const StatefulConfig& cfg) {
    cfg.validate();
    for (const char* name : {"flow_start", "src_ip"}) {
        if (!ds.has(name)) throw Error(ErrorKind::config_error, kModule, std::string("missing metadata column '") + name + "'");
    }
    if (cfg.service_features) {
        for (const char* name : {"dst_ip", "dst_port"}) {
            if (!ds.has(name)) throw Error(ErrorKind::config_error, kModule, std::string("missing column '") + name + "'");
        }
    }
    const std::size_t n = ds.rows();
    const auto& start_col = ds.column("flow_start");
    const auto& src_col = ds.column("src_ip");
    std::vector<std::int64_t> t(n);
    for (std::size_t r = 0; r < n; ++r) {
        auto v = time_ns(start_col.cell(r));
        if (!v) throw Error(ErrorKind::value_error, kModule, "row " + std::to_string(r) + ": missing flow_start");
        t[r] = *v;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });

    const std::int64_t w = from_seconds(cfg.window_seconds).count();
    std::vector<double> active(n), rate(n), ports(n), svc_active(n), svc_src(n);
    std::unordered_map<std::string, Window> by_src, by_svc;

    auto port_of = [&](std::size_t r) { return ds.has("dst_port") ? ds.column("dst_port").cell(r) : std::string(); };
    auto svc_of = [&](std::size_t r) { return ds.column("dst_ip").cell(r) + '|' + ds.column("dst_port").cell(r); };

    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && t[order[j]] == t[order[i]]) ++j;
        const std::int64_t now = t[order[i]];
        // Read every row at this instant before any of them enters a window.
        for (std::size_t k = i; k < j; ++k) {
            const std::size_t r = order[k];
            auto& sw = by_src[src_col.cell(r)];
            sw.evict_before(now - w);
            active[r] = static_cast<double>(sw.events.size());
            rate[r] = active[r] / cfg.window_seconds;
            ports[r] = static_cast<double>(sw.counts.size());
            if (cfg.service_features) {
                auto& vw = by_svc[svc_of(r)];
                vw.evict_before(now - w);
                svc_active[r] = static_cast<double>(vw.events.size());
                svc_src[r] = static_cast<double>(vw.counts.size());
            }
        }
        for (std::size_t k = i; k < j; ++k) {
            const std::size_t r = order[k];
            by_src[src_col.cell(r)].push(now, port_of(r));
            if (cfg.service_features) by_svc[svc_of(r)].push(now, src_col.cell(r));
        }
        i = j;
    }

    Dataset out = ds;
    for (const auto& name : stateful_columns(cfg)) {
        if (out.has(name)) out.drop_column(name);
    }
    out.add_numeric("src_active_flows", std::move(active));
    out.add_numeric("src_new_flow_rate", std::move(rate));
    out.add_numeric("src_distinct_dst_ports", std::move(ports));
    if (cfg.service_features) {
        out.add_numeric("svc_active_flows", std::move(svc_active));
        out.add_numeric("svc_distinct_src", std::move(svc_src));
    }
    return out;
}

}  // namespace flowcls::prep
