#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flowcls/net.hpp"

namespace flowcls::ingest {

namespace tcp_flag {
inline constexpr std::uint8_t fin = 0x01;
inline constexpr std::uint8_t syn = 0x02;
inline constexpr std::uint8_t rst = 0x04;
inline constexpr std::uint8_t psh = 0x08;
inline constexpr std::uint8_t ack = 0x10;
inline constexpr std::uint8_t urg = 0x20;
}  // namespace tcp_flag

inline constexpr std::uint8_t kProtoIcmp = 1;
inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;
inline constexpr std::uint8_t kProtoIcmpV6 = 58;

inline constexpr std::uint32_t kLinkEthernet = 1;
inline constexpr std::uint32_t kLinkRaw = 101;

inline constexpr std::uint32_t kMagicMicro = 0xA1B2C3D4;
inline constexpr std::uint32_t kMagicNano = 0xA1B23C4D;

struct Packet {
    Timestamp ts{};
    IpAddress src_ip;
    IpAddress dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t proto = 0;
    std::uint32_t ip_len = 0;
    std::uint32_t payload_len = 0;
    std::uint8_t tcp_flags = 0;
    bool super_packet = false;

    bool has(std::uint8_t flag) const noexcept { return (tcp_flags & flag) != 0; }
    friend bool operator==(const Packet&, const Packet&) = default;
};

inline bool has_ports(std::uint8_t proto) noexcept {
    return proto == kProtoTcp || proto == kProtoUdp;
}

/// Conjunction of optional clauses. An empty clause matches everything.
/// Port and prefix clauses match if either endpoint matches.
struct PacketFilter {
    std::set<std::uint8_t> protocols;
    std::set<std::uint16_t> ports;
    std::vector<IpPrefix> prefixes;

    bool empty() const noexcept { return protocols.empty() && ports.empty() && prefixes.empty(); }
    bool matches(const Packet& p) const noexcept;

    /// Builds a filter from textual prefixes; throws invalid_argument on a bad prefix.
    static PacketFilter from_strings(std::set<std::uint8_t> protocols,
                                     std::set<std::uint16_t> ports,
                                     const std::vector<std::string>& prefixes);
};

enum class OversizePolicy { keep, flag };

struct IngestConfig {
    std::uint32_t sample_n = 1;
    PacketFilter filter;
    std::uint32_t mtu = 1500;
    OversizePolicy snap_policy = OversizePolicy::flag;

    /// Throws config_error if sample_n < 1 or mtu < 68.
    void validate() const;
};

struct IngestSummary {
    std::uint64_t total_frames = 0;
    std::uint64_t decoded = 0;
    std::uint64_t skipped = 0;    // non-IP, non-first fragments, malformed
    std::uint64_t malformed = 0;  // subset of skipped
    std::uint64_t fragments = 0;  // subset of skipped
    std::uint64_t truncated = 0;
    std::uint64_t super_packets = 0;
    std::uint64_t filtered_out = 0;
    std::uint64_t sampled_out = 0;
    std::uint64_t emitted = 0;
};

struct NonIp {
    enum class Reason { not_ip, fragment, unsupported_encapsulation };
    Reason reason = Reason::not_ip;
    std::uint16_t ethertype = 0;
};

struct DecodeOptions {
    std::uint32_t mtu = 1500;
    bool flag_oversize = true;
};

/// Decodes one link-layer frame. Throws DecodeError (decode_error or
/// truncated_frame) with the offset inside the frame. The returned packet
/// carries a zero timestamp.
std::variant<Packet, NonIp> decode_frame(std::span<const std::uint8_t> bytes,
                                         std::uint32_t linktype, const DecodeOptions& opts = {});

struct RawRecord {
    Timestamp ts{};
    std::uint32_t orig_len = 0;
    std::uint64_t offset = 0;  // file offset of the record header
    std::vector<std::uint8_t> data;
};

/// Sequential reader for classic PCAP files (both magics, both byte orders).
class PcapReader {
public:
    explicit PcapReader(const std::string& path);

    std::uint32_t linktype() const noexcept { return linktype_; }
    bool nanosecond() const noexcept { return nanosecond_; }
    bool swapped() const noexcept { return swapped_; }
    std::uint32_t snaplen() const noexcept { return snaplen_; }

    /// Next record, or nullopt at a clean end of file. Throws
    /// truncated_capture when the file ends inside a record.
    std::optional<RawRecord> next();

private:
    std::uint32_t read32(const std::uint8_t* p) const noexcept;

    std::ifstream in_;
    std::string path_;
    std::uint64_t offset_ = 0;
    std::uint32_t linktype_ = 0;
    std::uint32_t snaplen_ = 0;
    bool nanosecond_ = false;
    bool swapped_ = false;
};

struct Capture {
    std::vector<Packet> packets;
    IngestSummary summary;
};

/// Reads a capture, decodes every frame, then applies the filter and 1-in-N
/// sampling from cfg (filter first). Packets stay in file order.
Capture parse_capture(const std::string& path, const IngestConfig& cfg);

/// Systematic sampling: keeps positions 0, n, 2n, ... Throws invalid_argument for n = 0.
std::vector<Packet> sample_stream(std::span<const Packet> stream, std::uint32_t n);

std::vector<Packet> filter_stream(std::span<const Packet> stream, const PacketFilter& filter);

// ---------------------------------------------------------------------------
// Reference writer

struct FrameOptions {
    std::uint32_t linktype = kLinkEthernet;
    std::optional<std::uint16_t> vlan;
    std::uint16_t ethertype_override = 0;  // non-zero: emit a non-IP frame of that type
};

/// Serializes a packet into wire bytes: Ethernet (optional 802.1Q) or raw IP,
/// IPv4/IPv6 header, TCP/UDP header, zero-filled payload. ip_len must cover
/// the headers.
std::vector<std::uint8_t> encode_frame(const Packet& pkt, const FrameOptions& opts = {});

struct WriterOptions {
    bool nanosecond = true;
    bool big_endian = false;
    std::uint32_t linktype = kLinkEthernet;
    std::uint32_t snaplen = 65535;
};

class PcapWriter {
public:
    PcapWriter(const std::string& path, const WriterOptions& opts = {});

    void write_frame(Timestamp ts, std::span<const std::uint8_t> frame);
    void write_packet(const Packet& pkt, std::optional<std::uint16_t> vlan = std::nullopt);
    /// Writes a non-IP frame (e.g. ARP) with the given ethertype.
    void write_non_ip(Timestamp ts, std::uint16_t ethertype, std::size_t size = 42);
    void close();

private:
    void put32(std::uint32_t v);
    void put16(std::uint16_t v);

    std::ofstream out_;
    WriterOptions opts_;
};

}  // namespace flowcls::ingest
