#include "flowcls/flow_features.hpp"

#include <algorithm>

#include "flowcls/error.hpp"

namespace flowcls::meter {

namespace {

class RowBuilder {
public:
    void meta(std::string name, std::string value) {
        row.cells.push_back({{std::move(name), ColumnKind::metadata, {}}, 0.0, std::move(value)});
    }
    void cat(std::string name, std::string value) {
        row.cells.push_back({{std::move(name), ColumnKind::categorical, {}}, 0.0, std::move(value)});
    }
    void num(std::string name, double value, std::string validity = {}) {
        row.cells.push_back({{std::move(name), ColumnKind::numeric, std::move(validity)}, value, {}});
    }
    void flag(const std::string& name, bool valid) { num(name, valid ? 1.0 : 0.0); }

    FeatureRow row;
};

void moment_block(RowBuilder& b, const std::string& prefix, const RunningMoments& m) {
    const bool has = m.count() >= 1;
    const std::string mv = prefix + "_mean_valid";
    b.num(prefix + "_mean", has ? m.mean() : 0.0, mv);
    b.flag(mv, has);
    b.num(prefix + "_var", m.variance(), prefix + "_var_valid");
    b.flag(prefix + "_var_valid", m.variance_defined());
    b.num(prefix + "_skew", m.skewness(), prefix + "_skew_valid");
    b.flag(prefix + "_skew_valid", m.shape_defined());
    b.num(prefix + "_kurt", m.kurtosis(), prefix + "_kurt_valid");
    b.flag(prefix + "_kurt_valid", m.shape_defined());
    b.num(prefix + "_min", has ? m.min() : 0.0, mv);
    b.num(prefix + "_max", has ? m.max() : 0.0, mv);
}

double direction_duration(const DirStats& d) {
    return d.pkt_count >= 2 ? to_seconds(d.last_ts - d.first_ts) : 0.0;
}

}  // namespace

const FeatureCell& FeatureRow::at(std::string_view name) const {
    for (const auto& c : cells) {
        if (c.spec.name == name) return c;
    }
    throw Error(ErrorKind::config_error, "meter", "unknown feature '" + std::string(name) + "'");
}

std::string protocol_name(std::uint8_t proto) {
    switch (proto) {
        case ingest::kProtoTcp: return "TCP";
        case ingest::kProtoUdp: return "UDP";
        case ingest::kProtoIcmp: return "ICMP";
        case ingest::kProtoIcmpV6: return "ICMPv6";
        default: return std::to_string(proto);
    }
}

FeatureRow finalize_features(const FlowRecord& rec, std::size_t splt_n) {
    RowBuilder b;
    b.meta("src_ip", rec.key.src_ip.to_string());
    b.meta("dst_ip", rec.key.dst_ip.to_string());
    b.meta("src_port", std::to_string(rec.key.src_port));
    b.meta("flow_start", format_seconds(rec.flow_start()));
    b.meta("flow_end", format_seconds(rec.flow_end()));
    b.meta("segment_index", std::to_string(rec.segment_index));
    b.meta("export_reason", std::string(to_string(rec.export_reason)));
    b.cat("proto", protocol_name(rec.key.proto));
    b.num("dst_port", rec.key.dst_port);

    const auto fp = static_cast<double>(rec.fwd.pkt_count);
    const auto bp = static_cast<double>(rec.bwd.pkt_count);
    const auto fb = static_cast<double>(rec.fwd.byte_count);
    const auto bb = static_cast<double>(rec.bwd.byte_count);
    b.num("fwd_packet_count", fp);
    b.num("bwd_packet_count", bp);
    b.num("total_packet_count", fp + bp);
    b.num("fwd_byte_count", fb);
    b.num("bwd_byte_count", bb);
    b.num("total_byte_count", fb + bb);
    b.num("fwd_payload_bytes", static_cast<double>(rec.fwd.payload_bytes));
    b.num("bwd_payload_bytes", static_cast<double>(rec.bwd.payload_bytes));
    b.num("total_payload_bytes", static_cast<double>(rec.fwd.payload_bytes + rec.bwd.payload_bytes));
    b.num("super_packet_count", static_cast<double>(rec.fwd.super_packets + rec.bwd.super_packets));

    const double flow_duration = to_seconds(rec.flow_end() - rec.flow_start());
    b.num("fwd_duration", direction_duration(rec.fwd), "fwd_duration_valid");
    b.flag("fwd_duration_valid", rec.fwd.pkt_count >= 2);
    b.num("bwd_duration", direction_duration(rec.bwd), "bwd_duration_valid");
    b.flag("bwd_duration_valid", rec.bwd.pkt_count >= 2);
    b.num("flow_duration", flow_duration);

    moment_block(b, "fwd_size", rec.fwd.size);
    moment_block(b, "bwd_size", rec.bwd.size);
    moment_block(b, "fwd_piat", rec.fwd.piat);
    moment_block(b, "bwd_piat", rec.bwd.piat);

    const double total_pkts = fp + bp;
    b.num("packet_ratio", fp / std::max(bp, 1.0));
    b.num("byte_ratio", fb / std::max(bb, 1.0));
    b.num("bytes_per_packet", total_pkts > 0 ? (fb + bb) / total_pkts : 0.0);
    b.num("packets_per_second", flow_duration > 0 ? total_pkts / flow_duration : 0.0);

    for (std::size_t f = 0; f < kFlagNames.size(); ++f) {
        const std::string name(kFlagNames[f]);
        const auto fc = static_cast<double>(rec.fwd.flag_counts[f]);
        const auto bc = static_cast<double>(rec.bwd.flag_counts[f]);
        b.num("fwd_" + name + "_count", fc);
        b.num("bwd_" + name + "_count", bc);
        b.num(name + "_count", fc + bc);
    }

    b.num("splt_len", static_cast<double>(std::min(rec.splt.size(), splt_n)));
    for (std::size_t i = 0; i < splt_n; ++i) {
        const bool present = i < rec.splt.size();
        const std::string idx = std::to_string(i + 1);
        b.num("splt_dir_" + idx, present ? rec.splt[i].direction : 0.0);
        b.num("splt_size_" + idx, present ? rec.splt[i].ip_len : 0.0);
        b.num("splt_gap_" + idx, present ? to_seconds(rec.splt[i].gap) : 0.0);
    }
    return std::move(b.row);
}

std::vector<ColumnSpec> flow_schema(std::size_t splt_n) {
    FlowRecord dummy;
    auto row = finalize_features(dummy, splt_n);
    std::vector<ColumnSpec> out;
    out.reserve(row.cells.size());
    for (auto& c : row.cells) out.push_back(std::move(c.spec));
    return out;
}

Dataset flows_to_dataset(std::span<const FlowRecord> records, std::size_t splt_n) {
    const auto schema = flow_schema(splt_n);
    std::vector<Column> cols(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        cols[i].spec = schema[i];
        if (schema[i].is_text()) {
            cols[i].texts.reserve(records.size());
        } else {
            cols[i].numbers.reserve(records.size());
        }
    }
    for (const auto& rec : records) {
        auto row = finalize_features(rec, splt_n);
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i].spec.is_text()) {
                cols[i].texts.push_back(std::move(row.cells[i].text));
            } else {
                cols[i].numbers.push_back(row.cells[i].number);
            }
        }
    }
    Dataset ds;
    for (auto& c : cols) ds.add_column(std::move(c));
    return ds;
}

}  // namespace flowcls::meter
