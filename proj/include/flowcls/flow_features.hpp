#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcls/dataset.hpp"
#include "flowcls/flow_meter.hpp"

namespace flowcls::meter {

struct FeatureCell {
    ColumnSpec spec;
    double number = 0.0;
    std::string text;
};

/// One flattened flow record in fixed column order.
struct FeatureRow {
    std::vector<FeatureCell> cells;

    /// Throws config_error for an unknown name.
    const FeatureCell& at(std::string_view name) const;
    double num(std::string_view name) const { return at(name).number; }
    const std::string& str(std::string_view name) const { return at(name).text; }
};

/// "TCP", "UDP", "ICMP", "ICMPv6", or the protocol number.
std::string protocol_name(std::uint8_t proto);

/// Flattens an exported record. Moments that are undefined for the sample
/// size are emitted as 0 with a companion `_valid` column set to 0. The SPLT
/// sequence becomes splt_len plus splt_n (dir, size, gap) column triples.
FeatureRow finalize_features(const FlowRecord& rec, std::size_t splt_n);

/// Column layout produced by finalize_features.
std::vector<ColumnSpec> flow_schema(std::size_t splt_n);

Dataset flows_to_dataset(std::span<const FlowRecord> records, std::size_t splt_n);

}  // namespace flowcls::meter
