#include "flowcls/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <ostream>
#include <set>

#include "flowcls/dataset.hpp"
#include "flowcls/error.hpp"
#include "flowcls/evaluation.hpp"
#include "flowcls/explain.hpp"
#include "flowcls/flow_features.hpp"
#include "flowcls/flow_meter.hpp"
#include "flowcls/hash.hpp"
#include "flowcls/ingest.hpp"
#include "flowcls/io.hpp"
#include "flowcls/labeling.hpp"
#include "flowcls/models.hpp"
#include "flowcls/partition.hpp"
#include "flowcls/prep.hpp"
#include "flowcls/synth.hpp"
#include "flowcls/transforms.hpp"
#include "flowcls/version.hpp"

namespace flowcls::cli {

namespace fs = std::filesystem;
using partition::Partition;

namespace {

constexpr std::string_view kModule = "cli";

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, kModule, msg); }

const std::set<std::string> kFreeForm = {"model.params", "grid.params", "transform.steps"};

bool same_type(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    if (a.is_string() && b.is_string()) return true;
    if (a.is_boolean() && b.is_boolean()) return true;
    if (a.is_array() && b.is_array()) return true;
    if (a.is_object() && b.is_object()) return true;
    return false;
}

std::string type_name(const json& j) {
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_boolean()) return "boolean";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

void merge_into(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) fail(ErrorKind::config_error, "config section '" + prefix + "' must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) fail(ErrorKind::config_error, "unknown config key '" + path + "'");
        auto& slot = base[key];
        if (kFreeForm.count(path)) {
            if (!same_type(slot, value)) {
                fail(ErrorKind::config_error, "config key '" + path + "' must be " + type_name(slot));
            }
            slot = value;
        } else if (slot.is_object()) {
            merge_into(slot, value, path);
        } else {
            if (!same_type(slot, value)) {
                fail(ErrorKind::config_error,
                     "config key '" + path + "' must be " + type_name(slot) + ", got " + type_name(value));
            }
            slot = value;
        }
    }
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> strings(const json& j) { return j.get<std::vector<std::string>>(); }

std::string safe_name(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
    return out;
}

ingest::IngestConfig ingest_config(const json& c) {
    ingest::IngestConfig ic;
    ic.sample_n = c.at("sample_n").get<std::uint32_t>();
    ic.mtu = c.at("mtu").get<std::uint32_t>();
    const auto snap = c.at("snap_policy").get<std::string>();
    if (snap == "keep") ic.snap_policy = ingest::OversizePolicy::keep;
    else if (snap == "flag") ic.snap_policy = ingest::OversizePolicy::flag;
    else fail(ErrorKind::config_error, "ingest.snap_policy must be keep or flag");
    std::set<std::uint8_t> protos;
    for (const auto& p : c.at("protocols")) protos.insert(p.get<std::uint8_t>());
    std::set<std::uint16_t> ports;
    for (const auto& p : c.at("ports")) ports.insert(p.get<std::uint16_t>());
    ic.filter = ingest::PacketFilter::from_strings(protos, ports, strings(c.at("prefixes")));
    ic.validate();
    return ic;
}

meter::MeterConfig meter_config(const json& c) {
    meter::MeterConfig mc;
    mc.idle_timeout = from_seconds(c.at("idle_timeout").get<double>());
    mc.active_timeout = from_seconds(c.at("active_timeout").get<double>());
    mc.max_flows = c.at("max_flows").get<std::size_t>();
    const auto lookup = c.at("lookup").get<std::string>();
    if (lookup == "canonical") mc.lookup = meter::LookupStrategy::canonical;
    else if (lookup == "dual_hash") mc.lookup = meter::LookupStrategy::dual_hash;
    else fail(ErrorKind::config_error, "meter.lookup must be canonical or dual_hash");
    mc.splt_n = c.at("splt_n").get<std::size_t>();
    mc.honor_fin_rst = c.at("honor_fin_rst").get<bool>();
    const auto anon = c.at("anonymize").get<std::string>();
    if (anon == "none") mc.anonymize = meter::Anonymization::none;
    else if (anon == "truncate_v4_24") mc.anonymize = meter::Anonymization::truncate_v4_24;
    else fail(ErrorKind::config_error, "meter.anonymize must be none or truncate_v4_24");
    mc.reorder_slack = from_seconds(c.at("reorder_slack").get<double>());
    mc.scan_interval = c.at("scan_interval").get<std::size_t>();
    mc.validate();
    return mc;
}

prep::CleaningConfig cleaning_config(const json& c) {
    prep::CleaningConfig cc;
    cc.drop_columns = strings(c.at("drop_columns"));
    cc.missing_drop = c.at("missing_drop").get<double>();
    cc.variance_epsilon = c.at("variance_epsilon").get<double>();
    cc.min_handshake_packets = c.at("min_handshake_packets").get<std::size_t>();
    cc.validate();
    return cc;
}

partition::SplitSpec split_spec(const json& cfg) {
    const auto& c = cfg.at("split");
    partition::SplitSpec s;
    s.strategy = partition::strategy_from_string(c.at("strategy").get<std::string>());
    s.train = c.at("train").get<double>();
    s.val = c.at("val").get<double>();
    s.test = c.at("test").get<double>();
    s.seed = cfg.at("seed").get<std::uint64_t>();
    s.group_key = c.at("group_key").get<std::string>();
    s.time_key = c.at("time_key").get<std::string>();
    s.held_out_classes = strings(c.at("held_out_classes"));
    s.validate();
    return s;
}

models::HyperGrid hyper_grid(const json& cfg) {
    const auto& g = cfg.at("grid");
    models::HyperGrid h;
    h.kind = models::model_kind_from_string(cfg.at("model").at("kind").get<std::string>());
    for (const auto& [key, values] : g.at("params").items()) {
        if (!values.is_array()) fail(ErrorKind::config_error, "grid.params." + key + " must be an array of numbers");
        std::vector<double> v;
        for (const auto& x : values) {
            if (!x.is_number()) fail(ErrorKind::config_error, "grid.params." + key + " must contain numbers");
            v.push_back(x.get<double>());
        }
        h.params[key] = std::move(v);
    }
    h.metric = g.at("metric").get<std::string>();
    h.folds = g.at("folds").get<std::size_t>();
    return h;
}

json read_json(const std::string& path) {
    const auto text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::value_error, "cannot parse " + path + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace

json default_config() {
    return json::parse(R"({
  "seed": 42,
  "input": {"capture": "data/synthetic.pcap", "label_map": "data/label_map.csv", "label_rules": ""},
  "output": {"root": "runs"},
  "ingest": {"sample_n": 1, "mtu": 1500, "snap_policy": "flag", "protocols": [], "ports": [], "prefixes": []},
  "meter": {"idle_timeout": 30, "active_timeout": 300, "max_flows": 1048576, "lookup": "canonical",
            "splt_n": 20, "honor_fin_rst": true, "anonymize": "none", "reorder_slack": 1, "scan_interval": 1024},
  "labeling": {"default_rules": true, "drop_unknown": true},
  "prepare": {"drop_columns": [], "missing_drop": 0.95, "variance_epsilon": 1e-12, "min_handshake_packets": 3,
              "stateless": true, "stateful": true, "window_seconds": 60, "service_features": true},
  "split": {"strategy": "random_stratified", "train": 0.6, "val": 0.2, "test": 0.2, "group_key": "src_ip",
            "time_key": "flow_start", "held_out_classes": []},
  "transform": {"steps": [{"kind": "onehot", "columns": ["proto"]}, {"kind": "standard"}]},
  "model": {"kind": "forest", "params": {"n_trees": 50}},
  "grid": {"enabled": true, "params": {"n_trees": [20, 50], "max_depth": [6, 0]}, "metric": "macro_f1", "folds": 3},
  "evaluate": {"partition": "test", "beta": 1, "top_n": 5},
  "explain": {"partition": "val", "metric": "macro_f1", "repeats": 10, "group_correlated": true,
              "correlation_threshold": 0.9, "pdp_features": [], "pdp_top": 3, "pdp_points": 20}
})");
}

json merge_config(const json& user) {
    json cfg = default_config();
    merge_into(cfg, user, "");
    return cfg;
}

json load_config(const std::string& path) {
    json user;
    try {
        user = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::config_error, "config " + path + " is not valid JSON: " + e.what());
    }
    return merge_config(user);
}

void apply_override(json& cfg, std::string_view dotted, std::string_view value) {
    const std::string path(dotted);
    std::vector<std::string> parts;
    for (std::size_t start = 0;;) {
        const auto dot = path.find('.', start);
        parts.push_back(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    json* node = &cfg;
    std::string walked;
    bool free_form = false;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& key = parts[i];
        walked += (walked.empty() ? "" : ".") + key;
        if (!node->is_object()) fail(ErrorKind::config_error, "override '" + path + "' does not address an object");
        const bool last = i + 1 == parts.size();
        if (!node->contains(key) && !free_form) fail(ErrorKind::config_error, "unknown config key '" + walked + "'");
        if (kFreeForm.count(walked)) free_form = true;
        json& slot = (*node)[key];
        if (!last) {
            if (slot.is_null()) slot = json::object();
            node = &slot;
            continue;
        }
        json parsed;
        if (slot.is_string()) {
            parsed = std::string(value);
        } else {
            try {
                parsed = json::parse(value);
            } catch (const json::exception&) {
                parsed = std::string(value);
            }
        }
        if (!free_form || !slot.is_null()) {
            if (!same_type(slot, parsed)) {
                fail(ErrorKind::config_error,
                     "override '" + path + "' must be " + type_name(slot) + ", got " + type_name(parsed));
            }
        }
        slot = std::move(parsed);
    }
}

void validate_config(const json& cfg) {
    ingest_config(cfg.at("ingest"));
    meter_config(cfg.at("meter"));
    cleaning_config(cfg.at("prepare"));
    split_spec(cfg);
    const auto kind = models::model_kind_from_string(cfg.at("model").at("kind").get<std::string>());
    const auto allowed = models::param_names(kind);
    for (const auto& [key, _] : cfg.at("model").at("params").items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(ErrorKind::config_error, "unknown model.params key '" + key + "'");
        }
    }
    if (cfg.at("grid").at("enabled").get<bool>()) hyper_grid(cfg).validate();
    if (!cfg.at("transform").at("steps").is_array()) fail(ErrorKind::config_error, "transform.steps must be an array");
    for (const char* section : {"evaluate", "explain"}) {
        const auto p = partition::partition_from_string(cfg.at(section).at("partition").get<std::string>());
        if (p == Partition::excluded) fail(ErrorKind::config_error, std::string(section) + ".partition cannot be excluded");
    }
    if (partition::partition_from_string(cfg.at("explain").at("partition").get<std::string>()) == Partition::test) {
        fail(ErrorKind::config_error, "explain.partition must not be test; explain on validation data");
    }
    explain::PermutationConfig pc;
    pc.metric = cfg.at("explain").at("metric").get<std::string>();
    pc.repeats = cfg.at("explain").at("repeats").get<std::size_t>();
    pc.correlation_threshold = cfg.at("explain").at("correlation_threshold").get<double>();
    pc.validate();
    if (cfg.at("evaluate").at("beta").get<double>() <= 0) fail(ErrorKind::config_error, "evaluate.beta must be positive");
}

std::string config_hash(const json& cfg) { return sha256_hex(cfg.dump()); }

std::string run_directory(const json& cfg) {
    return (fs::path(cfg.at("output").at("root").get<std::string>()) / ("run-" + config_hash(cfg).substr(0, 8))).string();
}

std::string_view to_string(Stage s) noexcept {
    switch (s) {
        case Stage::meter: return "meter";
        case Stage::diagnose: return "diagnose";
        case Stage::prepare: return "prepare";
        case Stage::split: return "split";
        case Stage::transform: return "transform";
        case Stage::train: return "train";
        case Stage::evaluate: return "evaluate";
        case Stage::explain: return "explain";
    }
    return "?";
}

std::vector<Stage> all_stages() {
    return {Stage::meter, Stage::diagnose, Stage::prepare, Stage::split,
            Stage::transform, Stage::train, Stage::evaluate, Stage::explain};
}

// ---- pipeline --------------------------------------------------------------

Pipeline::Pipeline(json cfg, std::string run_dir, std::ostream& log)
    : cfg_(std::move(cfg)), run_dir_(std::move(run_dir)), hash_(config_hash(cfg_)), log_(log) {
    validate_config(cfg_);
    std::error_code ec;
    fs::create_directories(run_dir_, ec);
    if (ec) fail(ErrorKind::io_error, "cannot create run directory " + run_dir_ + ": " + ec.message());
    const auto mpath = path("manifest.json");
    if (fs::exists(mpath)) {
        manifest_ = read_json(mpath);
        if (manifest_.value("config_hash", "") != hash_) manifest_ = json::object();
    }
    if (manifest_.empty()) {
        manifest_["tool_version"] = kToolVersion;
        manifest_["config_hash"] = hash_;
        manifest_["config"] = cfg_;
        manifest_["lineage"] = json::object();
        manifest_["stages"] = json::object();
        manifest_["timestamps"] = json::object();
    }
}

std::string Pipeline::path(const std::string& file) const { return (fs::path(run_dir_) / file).string(); }

std::string Pipeline::comment() const { return "config_hash=" + hash_; }

json& Pipeline::stage_entry(Stage s) { return manifest_["stages"][std::string(to_string(s))]; }

void Pipeline::record_output(Stage s, const std::string& name, const std::string& file) {
    stage_entry(s)["outputs"][name] = {{"path", fs::path(file).filename().string()}, {"sha256", sha256_file_hex(file)}};
}

void Pipeline::record_input(Stage s, const std::string& name, const std::string& file) {
    stage_entry(s)["inputs"][name] = {{"path", file}, {"sha256", sha256_file_hex(file)}};
}

void Pipeline::save_manifest() { write_json(path("manifest.json"), manifest_); }

void Pipeline::run(Stage stage) {
    const std::string name(to_string(stage));
    manifest_["stages"][name] = json::object();
    manifest_["timestamps"][name] = {{"started", iso_now()}};
    log_ << "[" << name << "] ";
    switch (stage) {
        case Stage::meter: meter(); break;
        case Stage::diagnose: diagnose(); break;
        case Stage::prepare: prepare(); break;
        case Stage::split: split(); break;
        case Stage::transform: transform(); break;
        case Stage::train: train(); break;
        case Stage::evaluate: evaluate(); break;
        case Stage::explain: explain(); break;
    }
    manifest_["timestamps"][name]["finished"] = iso_now();
    save_manifest();
}

void Pipeline::run_all() {
    for (auto s : all_stages()) run(s);
}

void Pipeline::meter() {
    const auto capture = cfg_.at("input").at("capture").get<std::string>();
    const auto ic = ingest_config(cfg_.at("ingest"));
    const auto mc = meter_config(cfg_.at("meter"));
    const auto cap = ingest::parse_capture(capture, ic);
    meter::MeterStats stats;
    const auto records = meter::meter_packets(cap.packets, mc, &stats);
    auto ds = meter::flows_to_dataset(records, mc.splt_n);
    ds.provenance = comment();
    const auto out = path("flows.csv");
    write_dataset(ds, out, comment());

    auto& e = stage_entry(Stage::meter);
    record_input(Stage::meter, "capture", capture);
    record_output(Stage::meter, "flows", out);
    e["ingest"] = {{"frames", cap.summary.total_frames},       {"decoded", cap.summary.decoded},
                   {"skipped", cap.summary.skipped},           {"malformed", cap.summary.malformed},
                   {"fragments", cap.summary.fragments},       {"truncated", cap.summary.truncated},
                   {"super_packets", cap.summary.super_packets}, {"filtered_out", cap.summary.filtered_out},
                   {"sampled_out", cap.summary.sampled_out},   {"emitted", cap.summary.emitted}};
    json reasons;
    for (std::size_t r = 0; r < stats.by_reason.size(); ++r) {
        reasons[std::string(meter::to_string(static_cast<meter::ExportReason>(r)))] = stats.by_reason[r];
    }
    e["meter"] = {{"packets", stats.packets},         {"late_packets", stats.late_packets},
                  {"dropped_late", stats.dropped_late}, {"exported", stats.exported},
                  {"by_reason", reasons},             {"peak_resident", stats.peak_resident}};
    log_ << cap.summary.emitted << " packets -> " << records.size() << " flows\n";
}

void Pipeline::diagnose() {
    const auto in = path("flows.csv");
    const auto ds = read_dataset(in);
    auto report = json::parse(prep::diagnose(ds).to_json());
    json out = {{"config_hash", hash_}};
    for (auto& [k, v] : report.items()) out[k] = v;
    const auto file = path("quality.json");
    write_json(file, out);
    record_input(Stage::diagnose, "flows", in);
    record_output(Stage::diagnose, "quality", file);
    log_ << ds.rows() << " rows, " << ds.cols() << " columns, " << report.value("duplicate_rows", 0)
         << " duplicate rows\n";
}

void Pipeline::prepare() {
    const auto in = path("flows.csv");
    const auto flows = read_dataset(in);
    const auto& input = cfg_.at("input");
    const auto& pc = cfg_.at("prepare");

    labeling::RuleSet rules;
    const auto rules_path = input.at("label_rules").get<std::string>();
    if (!rules_path.empty()) rules = labeling::RuleSet::load(rules_path);
    else if (cfg_.at("labeling").at("default_rules").get<bool>()) rules = labeling::RuleSet::defaults();
    labeling::LabelMap map;
    const auto map_path = input.at("label_map").get<std::string>();
    if (!map_path.empty()) map = labeling::LabelMap::load(map_path);

    labeling::LabelStats ls;
    auto ds = labeling::label_dataset(flows, rules, map, &ls);
    if (pc.at("stateless").get<bool>()) ds = prep::engineer_stateless(ds);
    if (pc.at("stateful").get<bool>()) {
        prep::StatefulConfig sc;
        sc.window_seconds = pc.at("window_seconds").get<double>();
        sc.service_features = pc.at("service_features").get<bool>();
        ds = prep::engineer_stateful(ds, sc);
    }
    auto cleaned = prep::clean(ds, cleaning_config(pc));
    ds = std::move(cleaned.data);

    std::size_t dropped_unknown = 0;
    if (cfg_.at("labeling").at("drop_unknown").get<bool>()) {
        std::vector<std::size_t> keep;
        const auto& labels = ds.text("label");
        for (std::size_t r = 0; r < ds.rows(); ++r) {
            if (labels[r] != labeling::kUnknown) keep.push_back(r);
        }
        dropped_unknown = ds.rows() - keep.size();
        ds = ds.select_rows(keep);
    }
    if (ds.rows() == 0) fail(ErrorKind::value_error, "no labelled rows left after preparation");

    ds.provenance = comment();
    const auto out = path("dataset.csv");
    write_dataset(ds, out, comment());
    const auto audit = path("clean_audit.jsonl");
    write_text_file(audit, json{{"config_hash", hash_}}.dump() + "\n" + cleaned.audit_jsonl());

    record_input(Stage::prepare, "flows", in);
    if (!map_path.empty()) record_input(Stage::prepare, "label_map", map_path);
    if (!rules_path.empty()) record_input(Stage::prepare, "label_rules", rules_path);
    record_output(Stage::prepare, "dataset", out);
    record_output(Stage::prepare, "audit", audit);
    auto& e = stage_entry(Stage::prepare);
    e["labeling"] = {{"rows", ls.rows},         {"labeled", ls.labeled}, {"unknown", ls.unknown},
                     {"conflicts", ls.conflicts}, {"by_port", ls.by_port}, {"by_map", ls.by_map}};
    e["dropped_rows"] = cleaned.total_dropped_rows();
    e["dropped_unknown"] = dropped_unknown;
    std::map<std::string, std::size_t> classes;
    for (const auto& l : ds.text("label")) ++classes[l];
    e["classes"] = classes;
    const auto dh = partition::dataset_hash(ds);
    e["dataset_hash"] = dh;
    manifest_["lineage"]["dataset_hash"] = dh;
    log_ << ds.rows() << " labelled rows in " << classes.size() << " classes\n";
}

void Pipeline::split() {
    const auto in = path("dataset.csv");
    const auto ds = read_dataset(in);
    const auto spec = split_spec(cfg_);
    const auto a = partition::split(ds, spec);
    const auto out = path("split.csv");
    write_text_file(out, a.to_csv(comment()));
    record_input(Stage::split, "dataset", in);
    record_output(Stage::split, "split", out);
    auto& e = stage_entry(Stage::split);
    e["summary"] = json::parse(partition::manifest_json(ds, a, spec));
    manifest_["lineage"]["split_train_fingerprint"] = a.fingerprint(Partition::train);
    log_ << a.count(Partition::train) << " train / " << a.count(Partition::val) << " val / "
         << a.count(Partition::test) << " test\n";
}

namespace {

struct Loaded {
    Dataset ds;
    partition::SplitAssignment split;
};

Loaded load_split(const Pipeline& p) {
    Loaded l{read_dataset(p.path("dataset.csv")), partition::SplitAssignment::from_csv(read_text_file(p.path("split.csv")))};
    if (l.split.dataset_hash != partition::dataset_hash(l.ds)) {
        fail(ErrorKind::lineage_error, "split.csv was produced for a different dataset");
    }
    return l;
}

transforms::FittedChain load_chain(const Pipeline& p, const partition::SplitAssignment& split) {
    const auto j = read_json(p.path("chain.json"));
    auto chain = transforms::FittedChain::from_json(j.at("chain"));
    if (chain.fit_fingerprint != split.fingerprint(Partition::train)) {
        fail(ErrorKind::lineage_error,
             "transform chain was fitted on rows other than this split's train partition");
    }
    return chain;
}

}  // namespace

void Pipeline::transform() {
    const auto l = load_split(*this);
    const auto train = partition::take(l.ds, l.split, Partition::train);
    const auto fitted = transforms::fit_chain(cfg_.at("transform").at("steps"), train);
    const auto out = path("chain.json");
    write_json(out, {{"config_hash", hash_},
                     {"split_train_fingerprint", train.fingerprint},
                     {"chain_fingerprint", fitted.chain.fingerprint()},
                     {"chain", fitted.chain.to_json()}});
    record_input(Stage::transform, "dataset", path("dataset.csv"));
    record_input(Stage::transform, "split", path("split.csv"));
    record_output(Stage::transform, "chain", out);
    stage_entry(Stage::transform)["chain_fingerprint"] = fitted.chain.fingerprint();
    manifest_["lineage"]["chain_fingerprint"] = fitted.chain.fingerprint();
    json warnings = json::array();
    for (const auto& s : fitted.chain.steps) {
        for (const auto& w : s.warnings) warnings.push_back(std::string(transforms::to_string(s.kind)) + ": " + w);
    }
    stage_entry(Stage::transform)["warnings"] = warnings;
    log_ << fitted.chain.steps.size() << " steps fitted on " << train.data.rows() << " train rows\n";
}

void Pipeline::train() {
    const auto l = load_split(*this);
    const auto chain = load_chain(*this, l.split);
    const auto seed = cfg_.at("seed").get<std::uint64_t>();
    const auto kind = models::model_kind_from_string(cfg_.at("model").at("kind").get<std::string>());
    json params = cfg_.at("model").at("params");

    auto& e = stage_entry(Stage::train);
    if (cfg_.at("grid").at("enabled").get<bool>()) {
        const auto grid = hyper_grid(cfg_);
        const bool temporal = l.split.strategy == partition::Strategy::temporal;
        const auto result = models::grid_search(l.ds, partition::design_set(l.split), cfg_.at("transform").at("steps"),
                                                grid, seed, "label", temporal);
        for (const auto& [k, v] : result.best_params.items()) params[k] = v;
        const auto cv = path("cv_table.csv");
        write_text_file(cv, result.table_csv(comment()));
        record_output(Stage::train, "cv_table", cv);
        e["grid"] = {{"metric", grid.metric},
                     {"folds", grid.folds},
                     {"combinations", result.table.size()},
                     {"best_params", result.best_params},
                     {"best_mean", result.table[result.best].mean},
                     {"best_std", result.table[result.best].stdev},
                     {"design_fingerprint", result.design_fingerprint}};
        log_ << "grid " << result.table.size() << " combinations, best " << result.best_params.dump() << "; ";
    }

    const auto train = chain.apply(partition::take(l.ds, l.split, Partition::train));
    const auto model = models::fit_model(kind, params, train, seed, "label");
    const auto model_json = model->to_json();
    const auto model_id = sha256_hex(model_json.dump());
    const auto out = path("model.json");
    write_json(out, {{"config_hash", hash_},
                     {"model_id", model_id},
                     {"dataset_hash", l.split.dataset_hash},
                     {"split_train_fingerprint", l.split.fingerprint(Partition::train)},
                     {"chain_fingerprint", chain.fingerprint()},
                     {"params", params},
                     {"model", model_json}});
    record_input(Stage::train, "chain", path("chain.json"));
    record_output(Stage::train, "model", out);
    e["model_id"] = model_id;
    e["params"] = params;
    e["train_rows"] = train.data.rows();
    manifest_["lineage"]["model_id"] = model_id;
    log_ << std::string(models::to_string(kind)) << " fitted on " << train.data.rows() << " rows\n";
}

namespace {

struct LoadedModel {
    models::ModelPtr model;
    json meta;
};

LoadedModel load_model(const Pipeline& p, const partition::SplitAssignment& split,
                       const transforms::FittedChain& chain) {
    auto meta = read_json(p.path("model.json"));
    if (meta.at("chain_fingerprint").get<std::string>() != chain.fingerprint()) {
        fail(ErrorKind::lineage_error, "model was trained with a different transform chain");
    }
    if (meta.at("split_train_fingerprint").get<std::string>() != split.fingerprint(Partition::train)) {
        fail(ErrorKind::lineage_error, "model was trained on a different train partition");
    }
    auto model = models::model_from_json(meta.at("model"));
    return {std::move(model), std::move(meta)};
}

}  // namespace

void Pipeline::evaluate() {
    const auto l = load_split(*this);
    const auto chain = load_chain(*this, l.split);
    const auto m = load_model(*this, l.split, chain);
    const auto& ec = cfg_.at("evaluate");
    const auto part = partition::partition_from_string(ec.at("partition").get<std::string>());
    const auto pd = chain.apply(partition::take(l.ds, l.split, part));
    if (pd.data.rows() == 0) fail(ErrorKind::value_error, "partition '" + std::string(partition::to_string(part)) + "' is empty");
    const auto pred = m.model->predict(pd.data);
    const auto& actual = pd.data.text("label");
    const auto cm = eval::confusion(actual, pred.labels, m.model->classes());
    eval::ReportConfig rc;
    rc.beta = ec.at("beta").get<double>();
    rc.top_n = ec.at("top_n").get<std::size_t>();
    const auto rep = eval::report(cm, rc);

    // one-vs-rest ROC per model class, over the evaluated rows
    std::string auc_csv = "# " + comment() + "\n# one-vs-rest AUC per class (multi-class extension)\nclass,auc\n";
    std::string roc = "# " + comment() + "\nclass,threshold,fpr,tpr\n";
    const auto ovr = eval::roc_auc_ovr(pred.probabilities, pred.classes, actual);
    for (std::size_t c = 0; c < pred.classes.size(); ++c) {
        const double auc = ovr.per_class[c];
        auc_csv += csv_escape(pred.classes[c]) + "," + (std::isnan(auc) ? std::string("undefined") : format_number(auc)) + "\n";
        if (std::isnan(auc)) continue;
        std::vector<double> s;
        std::vector<bool> pos;
        for (std::size_t r = 0; r < actual.size(); ++r) {
            s.push_back(pred.probabilities[r][c]);
            pos.push_back(actual[r] == pred.classes[c]);
        }
        for (const auto& pt : eval::roc_auc(s, pos).points) {
            roc += csv_escape(pred.classes[c]) + "," +
                   (std::isinf(pt.threshold) ? std::string("inf") : format_number(pt.threshold)) + "," +
                   format_number(pt.fpr) + "," + format_number(pt.tpr) + "\n";
        }
    }
    auc_csv += "macro," + (std::isnan(ovr.macro) ? std::string("undefined") : format_number(ovr.macro)) + "\n";

    const auto text = path("report.txt"), csv = path("report.csv"), conf = path("confusion.csv");
    write_text_file(text, "# " + comment() + "\n" + rep.to_text());
    write_text_file(csv, rep.to_csv(comment()));
    write_text_file(conf, eval::confusion_csv(cm, comment()));
    write_text_file(path("auc.csv"), auc_csv);
    write_text_file(path("roc.csv"), roc);
    record_input(Stage::evaluate, "model", path("model.json"));
    for (const auto& [name, file] : std::vector<std::pair<std::string, std::string>>{
             {"report_text", text}, {"report", csv}, {"confusion", conf}, {"auc", path("auc.csv")}, {"roc", path("roc.csv")}}) {
        record_output(Stage::evaluate, name, file);
    }
    auto& e = stage_entry(Stage::evaluate);
    e["partition"] = partition::to_string(part);
    e["rows"] = pd.data.rows();
    e["accuracy"] = rep.accuracy;
    e["macro_f"] = rep.macro_f;
    e["model_id"] = m.meta.at("model_id");
    std::size_t unseen = 0;
    for (auto r : l.split.rows(part)) unseen += l.split.unseen.size() > r && l.split.unseen[r];
    e["unseen_class_rows"] = unseen;
    log_ << "accuracy " << format_number(rep.accuracy) << ", macro-F" << format_number(rc.beta) << " "
         << format_number(rep.macro_f) << "\n";
}

void Pipeline::explain() {
    const auto l = load_split(*this);
    const auto chain = load_chain(*this, l.split);
    const auto m = load_model(*this, l.split, chain);
    const auto& xc = cfg_.at("explain");
    const auto part = partition::partition_from_string(xc.at("partition").get<std::string>());
    const auto pd = chain.apply(partition::take(l.ds, l.split, part));
    if (pd.data.rows() == 0) fail(ErrorKind::value_error, "partition '" + std::string(partition::to_string(part)) + "' is empty");

    std::vector<std::string> ranked;
    if (m.model->kind() != models::ModelKind::knn) {
        const auto gini = explain::gini_importance(*m.model);
        write_text_file(path("importance_gini.csv"), gini.to_csv(comment()));
        record_output(Stage::explain, "importance_gini", path("importance_gini.csv"));
        for (const auto& r : gini.rows) ranked.push_back(r.features.front());
    }
    explain::PermutationConfig pc;
    pc.metric = xc.at("metric").get<std::string>();
    pc.repeats = xc.at("repeats").get<std::size_t>();
    pc.seed = cfg_.at("seed").get<std::uint64_t>();
    pc.group_correlated = xc.at("group_correlated").get<bool>();
    pc.correlation_threshold = xc.at("correlation_threshold").get<double>();
    const auto perm = explain::permutation_importance(*m.model, pd.data, pc);
    write_text_file(path("importance_permutation.csv"), perm.to_csv(comment()));
    record_output(Stage::explain, "importance_permutation", path("importance_permutation.csv"));
    if (ranked.empty()) {
        for (const auto& r : perm.rows) ranked.push_back(r.features.front());
    }

    auto features = strings(xc.at("pdp_features"));
    if (features.empty()) {
        const auto top = std::min(ranked.size(), xc.at("pdp_top").get<std::size_t>());
        features.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top));
    }
    const auto points = xc.at("pdp_points").get<std::size_t>();
    json pdp_files = json::array();
    for (const auto& f : features) {
        if (!pd.data.has(f)) fail(ErrorKind::config_error, "PDP feature '" + f + "' is not a model feature");
        const auto grid = explain::quantile_grid(pd.data.numeric(f), points);
        const auto curve = explain::partial_dependence(*m.model, pd.data, f, grid);
        const auto file = path("pdp_" + safe_name(f) + ".csv");
        write_text_file(file, curve.to_csv(comment()));
        record_output(Stage::explain, "pdp_" + safe_name(f), file);
        pdp_files.push_back(fs::path(file).filename().string());
    }
    auto& e = stage_entry(Stage::explain);
    e["partition"] = partition::to_string(part);
    e["baseline"] = perm.baseline;
    e["pdp"] = pdp_files;
    e["model_id"] = m.meta.at("model_id");
    log_ << "permutation baseline " << format_number(perm.baseline) << ", top: ";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, perm.rows.size()); ++i) {
        const auto& r = perm.rows[i];
        log_ << (i ? ", " : "") << r.features.front() << (r.features.size() > 1 ? " (group of " + std::to_string(r.features.size()) + ")" : "")
             << " " << format_number(r.importance);
    }
    log_ << "\n";
}

// ---- command line ----------------------------------------------------------

namespace {

int exit_code(const Error& e) { return e.is_validation_error() ? 1 : 2; }

json resolve_config(const std::string& config_path, const std::vector<std::string>& extras) {
    std::string file = config_path;
    if (file.empty()) {
        if (const char* env = std::getenv(kConfigEnv)) file = env;
    }
    json cfg = file.empty() ? default_config() : load_config(file);
    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string tok = extras[i];
        if (!tok.starts_with("--")) fail(ErrorKind::config_error, "unexpected argument '" + tok + "'");
        tok = tok.substr(2);
        std::string value;
        if (const auto eq = tok.find('='); eq != std::string::npos) {
            value = tok.substr(eq + 1);
            tok = tok.substr(0, eq);
        } else {
            if (i + 1 >= extras.size()) fail(ErrorKind::config_error, "override --" + tok + " needs a value");
            value = extras[++i];
        }
        apply_override(cfg, tok, value);
    }
    return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"flowcls: flow metering and traffic classification toolkit", "flowcls"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    std::string config_path, run_dir;
    struct StageCommand {
        CLI::App* app;
        std::vector<Stage> stages;
    };
    std::vector<StageCommand> commands;
    auto add_stage = [&](const std::string& name, const std::string& help, std::vector<Stage> stages) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", config_path, "JSON config (default: $" + std::string(kConfigEnv) + ")");
        sub->add_option("--run-dir", run_dir, "output directory (default: <output.root>/run-<config hash>)");
        sub->allow_extras();
        sub->footer("Any config leaf can be overridden with --section.key value, e.g. --meter.idle_timeout 15");
        commands.push_back({sub, std::move(stages)});
    };
    add_stage("meter", "decode a capture and export flow records", {Stage::meter});
    add_stage("diagnose", "data-quality report of the flow table", {Stage::diagnose});
    add_stage("prepare", "label, engineer features and clean", {Stage::prepare});
    add_stage("split", "partition the prepared dataset", {Stage::split});
    add_stage("transform", "fit the transform chain on the train partition", {Stage::transform});
    add_stage("train", "grid search and fit the model", {Stage::train});
    add_stage("evaluate", "score the model on the evaluation partition", {Stage::evaluate});
    add_stage("explain", "feature importance and partial dependence", {Stage::explain});
    add_stage("pipeline", "run every stage in order", all_stages());

    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic labelled capture");
    std::string synth_out, synth_map;
    synth::SynthConfig sc;
    synth_cmd->add_option("-o,--out", synth_out, "capture path")->required();
    synth_cmd->add_option("--label-map", synth_map, "also write the matching label map here");
    synth_cmd->add_option("--seed", sc.seed, "generator seed")->capture_default_str();
    synth_cmd->add_option("--flows-per-class", sc.flows_per_class, "flows per labelled class")->capture_default_str();
    synth_cmd->add_option("--unknown-flows", sc.unknown_flows, "unlabelled flows")->capture_default_str();
    synth_cmd->add_option("--clients", sc.clients, "client hosts")->capture_default_str();
    synth_cmd->add_option("--horizon", sc.horizon_seconds, "capture length in seconds")->capture_default_str();

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth_cmd->parsed()) {
            const auto s = synth::write_capture(synth_out, sc);
            if (!synth_map.empty()) write_text_file(synth_map, synth::label_map_text());
            out << "wrote " << s.packets << " packets in " << s.flows << " flows to " << synth_out << "\n";
            return 0;
        }
        for (const auto& c : commands) {
            if (!c.app->parsed()) continue;
            const auto cfg = resolve_config(config_path, c.app->remaining());
            Pipeline p(cfg, run_dir.empty() ? run_directory(cfg) : run_dir, out);
            for (auto s : c.stages) p.run(s);
            out << "run directory: " << p.run_dir() << "\n";
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const json::exception& e) {
        err << "error: [cli] malformed JSON input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace flowcls::cli
