#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "flowcls/error.hpp"
#include "flowcls/flow_features.hpp"
#include "flowcls/flow_meter.hpp"
#include "flowcls/prep.hpp"
#include "support/test_support.hpp"

using namespace flowcls;
using namespace flowcls::prep;

namespace {

/// Metered flows from random traffic, with a label column.
Dataset metered(std::uint64_t seed, std::size_t packets = 4000) {
    std::mt19937_64 rng(seed);
    auto pkts = flowcls::testing::random_traffic(rng, packets, 30, 900);
    auto recs = meter::meter_packets(pkts, {});
    auto ds = meter::flows_to_dataset(recs, 4);
    std::vector<std::string> labels(ds.rows());
    for (std::size_t r = 0; r < ds.rows(); ++r) labels[r] = r % 3 ? "a" : "b";
    ds.add_text("label", ColumnKind::label, labels);
    return ds;
}

Dataset small() {
    Dataset ds;
    ds.add_text("flow_start", ColumnKind::metadata, {"0.000000000", "1.000000000", "2.000000000", "3.000000000"});
    ds.add_text("flow_end", ColumnKind::metadata, {"1.000000000", "2.000000000", "3.000000000", "4.000000000"});
    ds.add_text("proto", ColumnKind::categorical, {"TCP", "TCP", "UDP", "TCP"});
    ds.add_numeric("fwd_packet_count", {4, 1, 2, 5});
    ds.add_numeric("bwd_packet_count", {3, 1, 0, 5});
    ds.add_numeric("fwd_byte_count", {400, 60, 100, 800});
    ds.add_numeric("bwd_byte_count", {300, 60, 0, 700});
    ds.add_numeric("flow_duration", {1, 1, 1, 1});
    ds.add_numeric("syn_count", {1, 1, 0, 1});
    ds.add_numeric("total_packet_count", {7, 2, 2, 10});
    ds.add_text("label", ColumnKind::label, {"x", "y", "x", "y"});
    return ds;
}

}  // namespace

TEST_CASE("diagnose on metered flows finds no violations and does not mutate") {
    auto ds = metered(1);
    const auto before = to_csv(ds);
    auto rep = diagnose(ds);
    CHECK(to_csv(ds) == before);
    CHECK(rep.rows == ds.rows());
    CHECK(rep.plausibility_violations() == 0);
    CHECK(rep.plausibility.size() == 4);
    for (const auto& c : rep.columns) {
        CHECK(c.missing_fraction >= 0);
        CHECK(c.missing_fraction <= 1);
    }
}

TEST_CASE("diagnose counts duplicates and missing fractions") {
    auto ds = small();
    std::vector<std::size_t> rows = {0, 1, 2, 3, 0};
    auto dup = ds.select_rows(rows);
    CHECK(diagnose(dup).duplicate_rows == 1);

    Dataset sparse;
    std::vector<double> v(100, std::nan(""));
    for (int i = 0; i < 4; ++i) v[i] = i;
    sparse.add_numeric("mostly_missing", v);
    sparse.add_numeric("other", std::vector<double>(100, 1.0));
    auto rep = diagnose(sparse);
    CHECK(rep.column("mostly_missing").missing_fraction == doctest::Approx(0.96));
    CHECK(rep.column("mostly_missing").distinct == 4);
    CHECK(rep.column("other").variance == 0);

    auto res = clean(sparse);
    CHECK_FALSE(res.data.has("mostly_missing"));
}

TEST_CASE("plausibility rules") {
    auto ds = small();
    ds.column("fwd_packet_count").numbers[1] = 0;  // bytes with no packets
    ds.column("flow_duration").numbers[2] = -1;
    ds.column("flow_end").texts[3] = "2.5";
    auto rep = diagnose(ds);
    CHECK(rep.plausibility.at(kZeroPacketsWithBytes) == 1);
    CHECK(rep.plausibility.at(kNegativeDuration) == 1);
    CHECK(rep.plausibility.at(kEndBeforeStart) == 1);
    CHECK(rep.plausibility.at(kOversizePacket) == 0);
    auto res = clean(ds);
    CHECK(diagnose(res.data).plausibility_violations() == 0);
}

TEST_CASE("clean drops incomplete TCP handshakes, constants, duplicates; idempotent") {
    auto ds = small();
    ds.add_numeric("constant", {7, 7, 7, 7});
    auto res = clean(ds);
    CHECK_FALSE(res.data.has("constant"));
    // Row 1: TCP, SYN seen, 2 packets. Row 2 is UDP with 2 packets and stays.
    CHECK(res.data.rows() == 3);
    CHECK(res.data.text("proto") == std::vector<std::string>{"TCP", "UDP", "TCP"});
    bool saw_handshake = false;
    for (const auto& a : res.audit) saw_handshake |= a.rule == "incomplete_handshake" && a.count == 1;
    CHECK(saw_handshake);
    CHECK_FALSE(res.audit_jsonl().empty());

    auto again = clean(res.data);
    CHECK(again.audit.empty());
    CHECK(to_csv(again.data) == to_csv(res.data));
}

TEST_CASE("clean is idempotent on metered data and never drops the label") {
    for (std::uint64_t seed : {2, 3, 4}) {
        auto ds = metered(seed);
        auto once = clean(ds);
        CHECK(once.data.label_column().has_value());
        auto twice = clean(once.data);
        CHECK(twice.audit.empty());
        auto rep = diagnose(once.data);
        CHECK(rep.duplicate_rows == 0);
        CHECK(rep.plausibility_violations() == 0);
    }
    CleaningConfig cfg;
    cfg.drop_columns = {"label"};
    CHECK_THROWS_AS(clean(small(), cfg), Error);
    cfg.drop_columns = {"syn_count"};
    CHECK_FALSE(clean(small(), cfg).data.has("syn_count"));
}

TEST_CASE("validity links are cleared when a flag column is dropped") {
    Dataset ds;
    ds.add_numeric("v_valid", {1, 1, 1});
    ds.add_numeric("v", {1, 2, 3}, "v_valid");
    ds.add_text("label", ColumnKind::label, {"a", "b", "a"});
    auto res = clean(ds);
    REQUIRE(res.data.has("v"));
    CHECK(res.data.column("v").spec.validity_flag.empty());
}

TEST_CASE("stateless engineering") {
    auto ds = small();
    ds.drop_column("total_packet_count");
    auto out = engineer_stateless(ds);
    CHECK(out.rows() == ds.rows());
    CHECK(out.cols() == ds.cols() + 6);
    CHECK(out.numeric("packet_ratio")[0] == doctest::Approx(4.0 / 3.0));
    CHECK(out.numeric("packet_ratio")[2] == doctest::Approx(2.0));
    for (std::size_t r = 0; r < out.rows(); ++r) {
        CHECK(out.numeric("total_packet_count")[r] ==
              out.numeric("fwd_packet_count")[r] + out.numeric("bwd_packet_count")[r]);
    }
    // Existing columns are untouched.
    for (const auto& c : ds.columns()) CHECK(out.column(c.spec.name).cell(0) == c.cell(0));
    auto fwd_only = small();
    fwd_only.column("bwd_packet_count").numbers[0] = 0;
    CHECK(engineer_stateless(fwd_only).numeric("packet_ratio")[0] == 4);

    ds.drop_column("flow_duration");
    CHECK_THROWS_WITH_AS(engineer_stateless(ds), doctest::Contains("flow_duration"), Error);
}

TEST_CASE("stateless engineering reproduces the meter's ratio columns") {
    auto ds = metered(5);
    Dataset stripped = ds;
    for (const char* c : {"packet_ratio", "byte_ratio", "bytes_per_packet", "packets_per_second"}) {
        stripped.drop_column(c);
    }
    auto out = engineer_stateless(stripped);
    for (const char* c : {"packet_ratio", "byte_ratio", "bytes_per_packet", "packets_per_second"}) {
        CHECK(out.numeric(c) == ds.numeric(c));
    }
}

namespace {

Dataset host_flows(const std::vector<std::tuple<double, std::string, int>>& rows) {
    Dataset ds;
    std::vector<std::string> start, src, dst;
    std::vector<double> port;
    for (const auto& [t, s, p] : rows) {
        start.push_back(format_seconds(Timestamp{} + from_seconds(t)));
        src.push_back(s);
        dst.push_back("10.9.9.9");
        port.push_back(p);
    }
    ds.add_text("flow_start", ColumnKind::metadata, start);
    ds.add_text("src_ip", ColumnKind::metadata, src);
    ds.add_text("dst_ip", ColumnKind::metadata, dst);
    ds.add_numeric("dst_port", port);
    return ds;
}

}  // namespace

TEST_CASE("stateful features count strictly earlier flows") {
    auto ds = host_flows({{0, "a", 80}, {1, "a", 443}, {2, "a", 80}, {3, "a", 22}, {4, "a", 80}, {4, "b", 80}});
    StatefulConfig cfg;
    cfg.window_seconds = 10;
    auto out = engineer_stateful(ds, cfg);
    CHECK(out.cols() == ds.cols() + 5);
    CHECK(out.numeric("src_active_flows") == std::vector<double>{0, 1, 2, 3, 4, 0});
    CHECK(out.numeric("src_distinct_dst_ports") == std::vector<double>{0, 1, 2, 2, 3, 0});
    CHECK(out.numeric("src_new_flow_rate")[4] == doctest::Approx(0.4));
    // b's flow at t=4 does not see a's flow at the same instant.
    CHECK(out.numeric("svc_active_flows")[5] == 2);
    CHECK(out.numeric("svc_distinct_src")[5] == 1);

    cfg.window_seconds = 2;
    auto narrow = engineer_stateful(ds, cfg);
    CHECK(narrow.numeric("src_active_flows")[4] == 2);  // t in [2, 4)

    auto missing = ds;
    missing.drop_column("src_ip");
    CHECK_THROWS_AS(engineer_stateful(missing, cfg), Error);
}

TEST_CASE("stateful features are lookahead-free and permutation invariant") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> when(0, 100);
    std::uniform_int_distribution<int> host(0, 4), port(0, 6);
    std::vector<std::tuple<double, std::string, int>> rows;
    for (int i = 0; i < 300; ++i) {
        // Whole seconds create plenty of ties.
        rows.emplace_back(std::floor(when(rng)), "h" + std::to_string(host(rng)), 1000 + port(rng));
    }
    auto ds = host_flows(rows);
    StatefulConfig cfg;
    cfg.window_seconds = 15;
    auto out = engineer_stateful(ds, cfg);

    // Brute-force recomputation from the strictly-earlier subset for each row.
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& [t, src, p] = rows[r];
        std::size_t count = 0;
        std::set<int> ports;
        for (const auto& [t2, src2, p2] : rows) {
            if (src2 == src && t2 < t && t2 >= t - cfg.window_seconds) {
                ++count;
                ports.insert(p2);
            }
        }
        CHECK(out.numeric("src_active_flows")[r] == static_cast<double>(count));
        CHECK(out.numeric("src_distinct_dst_ports")[r] == static_cast<double>(ports.size()));
    }

    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto out2 = engineer_stateful(host_flows(shuffled), cfg);
    auto rows_of = [](const Dataset& d) {
        std::multiset<std::string> s;
        for (std::size_t r = 0; r < d.rows(); ++r) {
            std::string line;
            for (const auto& c : d.columns()) line += c.cell(r) + ",";
            s.insert(line);
        }
        return s;
    };
    CHECK(rows_of(out) == rows_of(out2));
}
