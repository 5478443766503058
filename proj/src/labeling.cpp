#include "flowcls/labeling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "flowcls/error.hpp"
#include "flowcls/io.hpp"

namespace flowcls::labeling {

namespace {

constexpr std::string_view kModule = "labeling";

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
std::optional<T> parse_int(std::string_view s) {
    s = trim(s);
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

struct LineError : Error {
    LineError(std::size_t line, const std::string& what)
        : Error(ErrorKind::config_error, kModule, "line " + std::to_string(line) + ": " + what) {}
};

[[noreturn]] void line_error(std::size_t line, const std::string& what) { throw LineError(line, what); }

/// Splits non-comment lines into trimmed CSV fields, skipping an optional
/// header whose first field is `header_first`.
template <typename Fn>
void for_each_record(std::string_view text, std::string_view header_first, std::size_t n_fields, Fn&& fn) {
    std::size_t line_no = 0;
    bool first_record = true;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        auto fields = csv_split(line);
        for (auto& f : fields) f = std::string(trim(f));
        if (first_record) {
            first_record = false;
            if (!fields.empty() && lower(fields[0]) == header_first) continue;
        }
        if (fields.size() != n_fields) {
            line_error(line_no, "expected " + std::to_string(n_fields) + " fields, got " +
                                    std::to_string(fields.size()));
        }
        try {
            fn(fields, line_no);
        } catch (const LineError&) {
            throw;
        } catch (const Error& e) {
            line_error(line_no, e.what());
        }
    }
}

int level(const LabelOutcome& o) {
    if (!o.known()) return 0;
    const bool high = o.confidence == Confidence::high;
    if (o.source == LabelSource::map) return high ? 4 : 2;
    return high ? 3 : 1;
}

}  // namespace

std::string_view to_string(Confidence c) noexcept { return c == Confidence::high ? "high" : "low"; }

std::string_view to_string(LabelSource s) noexcept {
    switch (s) {
        case LabelSource::port: return "port";
        case LabelSource::map: return "map";
        case LabelSource::none: break;
    }
    return "none";
}

Confidence confidence_from_string(std::string_view s) {
    const auto l = lower(trim(s));
    if (l == "low") return Confidence::low;
    if (l == "high") return Confidence::high;
    throw Error(ErrorKind::config_error, kModule, "confidence must be low or high, got '" + std::string(s) + "'");
}

std::optional<std::uint8_t> parse_protocol(std::string_view s) {
    const auto l = lower(trim(s));
    if (l == "tcp") return std::uint8_t{6};
    if (l == "udp") return std::uint8_t{17};
    if (l == "icmp") return std::uint8_t{1};
    if (l == "icmpv6") return std::uint8_t{58};
    auto n = parse_int<unsigned>(l);
    if (n && *n <= 255) return static_cast<std::uint8_t>(*n);
    return std::nullopt;
}

RuleSet::RuleSet(std::vector<LabelRule> rules) : rules_(std::move(rules)) {
    std::set<int> seen;
    for (const auto& r : rules_) {
        if (r.label.empty()) throw Error(ErrorKind::config_error, kModule, "rule with empty label");
        if (!seen.insert(r.priority).second) {
            throw Error(ErrorKind::config_error, kModule, "duplicate rule priority " + std::to_string(r.priority));
        }
    }
    std::sort(rules_.begin(), rules_.end(), [](const auto& a, const auto& b) { return a.priority < b.priority; });
}

RuleSet RuleSet::parse(std::string_view text) {
    std::vector<LabelRule> rules;
    std::set<int> priorities;
    for_each_record(text, "matcher_type", 5, [&](const std::vector<std::string>& f, std::size_t line) {
        LabelRule r;
        const auto type = lower(f[0]);
        if (type == "port") {
            PortMatcher m;
            const auto slash = f[1].find('/');
            auto port = parse_int<std::uint16_t>(std::string_view(f[1]).substr(0, slash));
            if (!port) line_error(line, "bad port '" + f[1] + "'");
            m.port = *port;
            if (slash != std::string::npos) {
                m.proto = parse_protocol(std::string_view(f[1]).substr(slash + 1));
                if (!m.proto) line_error(line, "bad protocol in '" + f[1] + "'");
            }
            r.matcher = m;
        } else if (type == "ip-prefix") {
            r.matcher = IpPrefix::parse(f[1]);
        } else if (type == "ip-exact") {
            auto ip = IpAddress::parse(f[1]);
            if (!ip) line_error(line, "bad address '" + f[1] + "'");
            r.matcher = *ip;
        } else {
            line_error(line, "unknown matcher type '" + f[0] + "'");
        }
        if (f[2].empty()) line_error(line, "empty label");
        r.label = f[2];
        r.confidence = confidence_from_string(f[3]);
        auto prio = parse_int<int>(f[4]);
        if (!prio) line_error(line, "bad priority '" + f[4] + "'");
        if (!priorities.insert(*prio).second) line_error(line, "duplicate priority " + f[4]);
        r.priority = *prio;
        rules.push_back(std::move(r));
    });
    return RuleSet(std::move(rules));
}

RuleSet RuleSet::load(const std::string& path) { return parse(read_text_file(path)); }

RuleSet RuleSet::defaults() {
    struct Row { std::uint16_t port; std::uint8_t proto; const char* label; };
    static constexpr Row rows[] = {
        {21, 6, "FTP"},   {22, 6, "SSH"},    {23, 6, "TELNET"}, {25, 6, "SMTP"},  {53, 17, "DNS"},
        {53, 6, "DNS"},   {80, 6, "HTTP"},   {110, 6, "POP3"},  {123, 17, "NTP"}, {143, 6, "IMAP"},
        {443, 6, "HTTPS"}, {3389, 6, "RDP"},
    };
    std::vector<LabelRule> rules;
    int prio = 100;
    for (const auto& r : rows) {
        rules.push_back({PortMatcher{r.port, r.proto}, r.label, Confidence::low, prio++});
    }
    return RuleSet(std::move(rules));
}

LabelMap::LabelMap(std::vector<MapEntry> entries) : entries_(std::move(entries)) {
    std::set<IpPrefix> seen;
    for (const auto& e : entries_) {
        if (e.label.empty()) throw Error(ErrorKind::config_error, kModule, "map entry with empty label");
        if (!seen.insert(e.prefix).second) {
            throw Error(ErrorKind::config_error, kModule, "duplicate map entry " + e.prefix.to_string());
        }
    }
    // Longest prefix first, so the first containing entry is the answer.
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const auto& a, const auto& b) { return a.prefix.length() > b.prefix.length(); });
}

LabelMap LabelMap::parse(std::string_view text) {
    std::vector<MapEntry> entries;
    std::set<IpPrefix> seen;
    for_each_record(text, "ip_or_prefix", 3, [&](const std::vector<std::string>& f, std::size_t line) {
        MapEntry e{IpPrefix::parse(f[0]), f[1], confidence_from_string(f[2])};
        if (e.label.empty()) line_error(line, "empty label");
        if (!seen.insert(e.prefix).second) line_error(line, "duplicate entry " + f[0]);
        entries.push_back(std::move(e));
    });
    return LabelMap(std::move(entries));
}

LabelMap LabelMap::load(const std::string& path) { return parse(read_text_file(path)); }

const MapEntry* LabelMap::lookup(const IpAddress& addr) const {
    for (const auto& e : entries_) {
        if (e.prefix.contains(addr)) return &e;
    }
    return nullptr;
}

LabelOutcome label_by_port(const FlowView& row, const RuleSet& rules) {
    for (const auto& r : rules.rules()) {
        bool hit = false;
        if (const auto* pm = std::get_if<PortMatcher>(&r.matcher)) {
            hit = pm->port == row.dst_port && (!pm->proto || *pm->proto == row.proto);
        } else if (const auto* pfx = std::get_if<IpPrefix>(&r.matcher)) {
            hit = pfx->contains(row.dst_ip);
        } else {
            hit = std::get<IpAddress>(r.matcher) == row.dst_ip;
        }
        if (hit) return {r.label, LabelSource::port, r.confidence};
    }
    return {};
}

LabelOutcome label_by_map(const FlowView& row, const LabelMap& map) {
    if (const auto* e = map.lookup(row.dst_ip)) return {e->label, LabelSource::map, e->confidence};
    return {};
}

LabelOutcome resolve(const std::vector<LabelOutcome>& outcomes, std::size_t* conflicts) {
    int best = 0;
    for (const auto& o : outcomes) best = std::max(best, level(o));
    if (best == 0) return {};
    const LabelOutcome* winner = nullptr;
    for (const auto& o : outcomes) {
        if (level(o) != best) continue;
        if (winner && winner->label != o.label) {
            if (conflicts) ++*conflicts;
            return {};
        }
        if (!winner) winner = &o;
    }
    return *winner;
}

Dataset label_dataset(const Dataset& ds, const RuleSet& rules, const LabelMap& map, LabelStats* stats) {
    const auto& dst_ip = ds.text("dst_ip");
    const auto& dst_port = ds.numeric("dst_port");
    const auto& proto = ds.text("proto");

    LabelStats st;
    st.rows = ds.rows();
    std::vector<std::string> labels(ds.rows()), sources(ds.rows()), confidences(ds.rows());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        FlowView v;
        auto ip = IpAddress::parse(dst_ip[i]);
        if (!ip) throw Error(ErrorKind::value_error, kModule, "row " + std::to_string(i) + ": bad dst_ip '" + dst_ip[i] + "'");
        v.dst_ip = *ip;
        const double port = dst_port[i];
        v.dst_port = std::isfinite(port) && port >= 0 && port <= 65535 ? static_cast<std::uint16_t>(port) : 0;
        v.proto = parse_protocol(proto[i]).value_or(0);

        auto out = resolve({label_by_map(v, map), label_by_port(v, rules)}, &st.conflicts);
        labels[i] = out.label;
        sources[i] = std::string(to_string(out.source));
        confidences[i] = out.known() ? std::string(to_string(out.confidence)) : std::string();
        if (out.known()) {
            ++st.labeled;
            ++(out.source == LabelSource::map ? st.by_map : st.by_port);
        } else {
            ++st.unknown;
        }
    }

    Dataset out = ds;
    for (const auto& name : out.names_of(ColumnKind::label)) out.drop_column(name);
    for (const char* name : {"label_source", "label_confidence"}) {
        if (out.has(name)) out.drop_column(name);
    }
    out.add_text("label", ColumnKind::label, std::move(labels));
    out.add_text("label_source", ColumnKind::metadata, std::move(sources));
    out.add_text("label_confidence", ColumnKind::metadata, std::move(confidences));
    if (stats) *stats = st;
    return out;
}

}  // namespace flowcls::labeling
