#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <list>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flowcls/ingest.hpp"
#include "flowcls/net.hpp"
#include "flowcls/running_moments.hpp"

namespace flowcls::meter {

using ingest::Packet;

struct Endpoint {
    IpAddress ip;
    std::uint16_t port = 0;
    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct FlowKey {
    IpAddress src_ip;
    IpAddress dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t proto = 0;

    static FlowKey of(const Packet& p) noexcept {
        return {p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.proto};
    }
    FlowKey reverse() const noexcept { return {dst_ip, src_ip, dst_port, src_port, proto}; }
    Endpoint source() const noexcept { return {src_ip, src_port}; }
    Endpoint destination() const noexcept { return {dst_ip, dst_port}; }

    friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

struct CanonicalKey {
    Endpoint lo;
    Endpoint hi;
    std::uint8_t proto = 0;
    friend auto operator<=>(const CanonicalKey&, const CanonicalKey&) = default;
};

enum class Orientation { forward, backward };

/// Orders the two endpoints by (ip, port). The orientation reports whether
/// the key's source is the lower endpoint.
std::pair<CanonicalKey, Orientation> canonicalize(const FlowKey& key) noexcept;

inline constexpr std::uint64_t kDefaultHashSeed = 0x5eed'f10c'0ddb'a11ULL;

/// Seeded 64-bit hash of the key in the given orientation.
std::uint64_t flow_hash(const FlowKey& key, std::uint64_t seed = kDefaultHashSeed) noexcept;

struct DualHash {
    std::uint64_t fwd_id = 0;
    std::uint64_t rev_id = 0;
    friend bool operator==(const DualHash&, const DualHash&) = default;
};

DualHash dual_hash(const FlowKey& key, std::uint64_t seed = kDefaultHashSeed) noexcept;

struct CanonicalKeyHash {
    std::size_t operator()(const CanonicalKey& k) const noexcept;
};

enum class TcpFlagIndex : std::size_t { fin, syn, rst, psh, ack, urg };
inline constexpr std::array<std::string_view, 6> kFlagNames = {"fin", "syn", "rst",
                                                               "psh", "ack", "urg"};

struct DirStats {
    std::uint64_t pkt_count = 0;
    std::uint64_t byte_count = 0;
    std::uint64_t payload_bytes = 0;
    std::uint64_t super_packets = 0;
    Timestamp first_ts{};
    Timestamp last_ts{};
    Timestamp prev_arrival{};  // arrival-order predecessor for PIAT
    RunningMoments size;
    RunningMoments piat;  // seconds
    std::array<std::uint64_t, 6> flag_counts{};

    void add(const Packet& p);
};

struct SpltEntry {
    std::int8_t direction = 1;  // +1 forward, -1 backward
    std::uint32_t ip_len = 0;
    Duration gap{};  // since the previous packet of the flow, either direction
    friend bool operator==(const SpltEntry&, const SpltEntry&) = default;
};

enum class ExportReason { idle, active, fin_rst, pressure, end_of_input };
std::string_view to_string(ExportReason r) noexcept;

struct FlowRecord {
    FlowKey key;  // oriented by the first packet of the segment
    DirStats fwd;
    DirStats bwd;
    std::vector<SpltEntry> splt;
    ExportReason export_reason = ExportReason::end_of_input;
    std::uint32_t segment_index = 0;
    Timestamp last_arrival{};

    Timestamp flow_start() const noexcept;
    Timestamp flow_end() const noexcept;
    std::uint64_t total_packets() const noexcept { return fwd.pkt_count + bwd.pkt_count; }
    std::uint64_t total_bytes() const noexcept { return fwd.byte_count + bwd.byte_count; }
    CanonicalKey canonical_key() const noexcept { return canonicalize(key).first; }
};

enum class LookupStrategy { canonical, dual_hash };
enum class Anonymization { none, truncate_v4_24 };

struct MeterConfig {
    Duration idle_timeout = std::chrono::seconds(30);
    Duration active_timeout = std::chrono::seconds(300);
    std::size_t max_flows = std::size_t(1) << 20;
    LookupStrategy lookup = LookupStrategy::canonical;
    std::size_t splt_n = 20;
    bool honor_fin_rst = true;
    Anonymization anonymize = Anonymization::none;
    Duration reorder_slack = std::chrono::seconds(1);
    std::size_t scan_interval = 1024;
    std::uint64_t hash_seed = kDefaultHashSeed;

    /// Throws config_error unless 0 < idle < active and max_flows >= 1.
    void validate() const;
};

struct MeterStats {
    std::uint64_t packets = 0;
    std::uint64_t late_packets = 0;
    std::uint64_t dropped_late = 0;
    std::uint64_t exported = 0;
    std::array<std::uint64_t, 5> by_reason{};
    std::size_t peak_resident = 0;
};

/// Hash-based bidirectional flow cache driven by packet timestamps.
/// Single writer; exported records are independent values.
class FlowCache {
public:
    explicit FlowCache(MeterConfig cfg);

    /// Applies one packet and returns every record it caused to be exported:
    /// periodic-scan expiries, then lazy expiry of the matching entry, then
    /// pressure eviction, then a FIN/RST export.
    std::vector<FlowRecord> process_packet(const Packet& pkt);

    /// Exports every resident flow (reason end_of_input) ordered by flow start.
    std::vector<FlowRecord> flush();

    std::size_t size() const noexcept { return lru_.size(); }
    const MeterStats& stats() const noexcept { return stats_; }
    const MeterConfig& config() const noexcept { return cfg_; }

private:
    struct Entry {
        FlowRecord rec;
        CanonicalKey ckey;
        std::uint64_t initiator_hash = 0;
    };
    using Iter = std::list<Entry>::iterator;

    Iter find(const FlowKey& key, Orientation& dir);
    Iter insert(const Packet& pkt);
    void erase(Iter it);
    FlowRecord take(Iter it, ExportReason reason);
    void update(Iter it, const Packet& pkt, Orientation dir);
    void scan(std::vector<FlowRecord>& out);

    MeterConfig cfg_;
    std::list<Entry> lru_;  // front = least recently updated
    std::unordered_map<CanonicalKey, Iter, CanonicalKeyHash> by_canonical_;
    std::unordered_multimap<std::uint64_t, Iter> by_hash_;
    std::unordered_map<CanonicalKey, std::uint32_t, CanonicalKeyHash> next_segment_;
    Timestamp watermark_{};
    bool seen_any_ = false;
    MeterStats stats_;
};

/// Runs a whole packet sequence through a fresh cache and flushes it.
std::vector<FlowRecord> meter_packets(std::span<const Packet> packets, const MeterConfig& cfg,
                                      MeterStats* stats = nullptr);

}  // namespace flowcls::meter
