#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "flowcls/dataset.hpp"
#include "flowcls/net.hpp"

namespace flowcls::labeling {

inline constexpr std::string_view kUnknown = "UNKNOWN";

enum class Confidence { low, high };
enum class LabelSource { none, port, map };

std::string_view to_string(Confidence c) noexcept;
std::string_view to_string(LabelSource s) noexcept;
Confidence confidence_from_string(std::string_view s);

/// Protocol name or number ("tcp", "UDP", "6") to IP protocol number.
std::optional<std::uint8_t> parse_protocol(std::string_view s);

struct PortMatcher {
    std::uint16_t port = 0;
    std::optional<std::uint8_t> proto;  // nullopt matches any protocol
};

struct LabelRule {
    std::variant<PortMatcher, IpPrefix, IpAddress> matcher;
    std::string label;
    Confidence confidence = Confidence::low;
    int priority = 0;  // lower value wins
};

/// The fields labeling looks at.
struct FlowView {
    IpAddress dst_ip;
    std::uint16_t dst_port = 0;
    std::uint8_t proto = 0;
};

class RuleSet {
public:
    RuleSet() = default;
    /// Throws config_error on duplicate priorities or empty labels.
    explicit RuleSet(std::vector<LabelRule> rules);

    /// CSV `matcher_type,matcher_value,label,confidence,priority`, where
    /// matcher_type is port, ip-prefix or ip-exact and a port value is
    /// `<port>[/<proto>]`. Errors name the offending line.
    static RuleSet parse(std::string_view text);
    static RuleSet load(const std::string& path);
    /// Well-known legacy service ports, all low confidence.
    static RuleSet defaults();

    const std::vector<LabelRule>& rules() const noexcept { return rules_; }

private:
    std::vector<LabelRule> rules_;  // sorted by priority
};

struct MapEntry {
    IpPrefix prefix;
    std::string label;
    Confidence confidence = Confidence::high;
};

class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::vector<MapEntry> entries);

    /// CSV `ip_or_prefix,label,confidence`. Errors name the offending line.
    static LabelMap parse(std::string_view text);
    static LabelMap load(const std::string& path);

    /// Exact host entry first, then the longest containing prefix.
    const MapEntry* lookup(const IpAddress& addr) const;
    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::vector<MapEntry> entries_;
};

struct LabelOutcome {
    std::string label{kUnknown};
    LabelSource source = LabelSource::none;
    Confidence confidence = Confidence::low;

    bool known() const noexcept { return source != LabelSource::none; }
    friend bool operator==(const LabelOutcome&, const LabelOutcome&) = default;
};

LabelOutcome label_by_port(const FlowView& row, const RuleSet& rules);
LabelOutcome label_by_map(const FlowView& row, const LabelMap& map);

/// Strict precedence: high map > high port > low map > low port. Disagreement
/// at the winning level yields UNKNOWN and bumps `conflicts`.
LabelOutcome resolve(const std::vector<LabelOutcome>& outcomes, std::size_t* conflicts = nullptr);

struct LabelStats {
    std::size_t rows = 0, labeled = 0, unknown = 0, conflicts = 0;
    std::size_t by_port = 0, by_map = 0;
};

/// Adds `label` (label), `label_source` and `label_confidence` (metadata)
/// columns using dst_ip, dst_port and proto. Existing label columns are
/// replaced.
Dataset label_dataset(const Dataset& ds, const RuleSet& rules, const LabelMap& map,
                      LabelStats* stats = nullptr);

}  // namespace flowcls::labeling
