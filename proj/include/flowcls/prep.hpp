#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "flowcls/dataset.hpp"

namespace flowcls::prep {

struct ColumnQuality {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    double missing_fraction = 0;
    std::size_t distinct = 0;
    double variance = 0;  // numeric only; population variance of present values
};

// Plausibility rule ids.
inline constexpr const char* kNegativeDuration = "negative_duration";
inline constexpr const char* kZeroPacketsWithBytes = "zero_packets_nonzero_bytes";
inline constexpr const char* kOversizePacket = "size_over_65535";
inline constexpr const char* kEndBeforeStart = "end_before_start";

struct QualityReport {
    std::size_t rows = 0, cols = 0;
    std::vector<ColumnQuality> columns;
    std::size_t duplicate_rows = 0;
    std::map<std::string, std::size_t> plausibility;  // every rule id, possibly 0

    const ColumnQuality& column(const std::string& name) const;
    std::size_t plausibility_violations() const;
    std::string to_json() const;
};

/// Read-only inspection. Plausibility rules only look at columns that exist.
QualityReport diagnose(const Dataset& ds);

struct CleaningConfig {
    std::vector<std::string> drop_columns;  // leaky or out-of-scope columns
    double missing_drop = 0.95;             // drop when missing fraction exceeds this
    double variance_epsilon = 1e-12;        // drop numeric columns at or below this variance
    double min_handshake_packets = 3;       // TCP rows with SYN and fewer packets are dropped

    void validate() const;
};

struct AuditEntry {
    std::string rule;
    std::string target;  // column name, or empty for row rules
    std::size_t count = 0;
    std::size_t pass = 0;
};

struct CleanResult {
    Dataset data;
    std::vector<AuditEntry> audit;

    std::size_t total_dropped_rows() const;
    /// One JSON object per line.
    std::string audit_jsonl() const;
};

/// Applies the rules in fixed order, repeating the sequence until a pass
/// drops nothing so that cleaning its own output is a no-op.
CleanResult clean(const Dataset& ds, const CleaningConfig& cfg = {});

/// Adds totals and ratio features that are not present yet.
Dataset engineer_stateless(const Dataset& ds);

struct StatefulConfig {
    double window_seconds = 60;
    bool service_features = true;  // fan-in keyed by (dst_ip, dst_port)

    void validate() const;
};

/// Host-centric window features computed strictly from rows whose
/// flow_start precedes the current row's. Row order is preserved.
Dataset engineer_stateful(const Dataset& ds, const StatefulConfig& cfg = {});

/// Names of the columns engineer_stateful adds.
std::vector<std::string> stateful_columns(const StatefulConfig& cfg);

}  // namespace flowcls::prep
