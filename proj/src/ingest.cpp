#include "flowcls/ingest.hpp"

#include <algorithm>
#include <cstring>

#include "flowcls/error.hpp"

namespace flowcls::ingest {

namespace {

constexpr std::string_view kModule = "ingest";

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherIpv6 = 0x86DD;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint16_t kEtherQinQ = 0x88A8;
constexpr std::uint16_t kEtherMpls = 0x8847;

std::uint16_t be16(const std::uint8_t* p) noexcept { return std::uint16_t((p[0] << 8) | p[1]); }

std::uint32_t bswap32(std::uint32_t v) noexcept {
    return (v >> 24) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) | (v << 24);
}

[[noreturn]] void truncated(std::size_t need, std::size_t have, std::size_t offset) {
    throw DecodeError(ErrorKind::truncated_frame, kModule,
                      "frame needs " + std::to_string(need) + " bytes, has " + std::to_string(have),
                      offset);
}

struct L4Result {
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t flags = 0;
    std::uint32_t header_len = 0;
};

L4Result decode_l4(std::span<const std::uint8_t> bytes, std::size_t off, std::uint8_t proto) {
    L4Result r;
    if (proto == kProtoTcp) {
        if (bytes.size() < off + 20) truncated(off + 20, bytes.size(), off);
        r.src_port = be16(&bytes[off]);
        r.dst_port = be16(&bytes[off + 2]);
        r.header_len = std::uint32_t(bytes[off + 12] >> 4) * 4;
        if (r.header_len < 20) {
            throw DecodeError(ErrorKind::decode_error, kModule, "tcp data offset below 5", off + 12);
        }
        r.flags = bytes[off + 13] & 0x3f;
    } else if (proto == kProtoUdp) {
        if (bytes.size() < off + 8) truncated(off + 8, bytes.size(), off);
        r.src_port = be16(&bytes[off]);
        r.dst_port = be16(&bytes[off + 2]);
        r.header_len = 8;
    }
    return r;
}

std::variant<Packet, NonIp> decode_ipv4(std::span<const std::uint8_t> bytes, std::size_t off) {
    if (bytes.size() < off + 20) truncated(off + 20, bytes.size(), off);
    const std::uint8_t* ip = &bytes[off];
    if ((ip[0] >> 4) != 4) {
        throw DecodeError(ErrorKind::decode_error, kModule, "ip version mismatch", off);
    }
    const std::uint32_t ihl = std::uint32_t(ip[0] & 0x0f) * 4;
    if (ihl < 20) throw DecodeError(ErrorKind::decode_error, kModule, "ipv4 header length short", off);
    if (bytes.size() < off + ihl) truncated(off + ihl, bytes.size(), off);
    const std::uint32_t total_len = be16(ip + 2);
    if (total_len < ihl) {
        throw DecodeError(ErrorKind::decode_error, kModule, "ipv4 total length below header", off + 2);
    }
    const std::uint16_t frag = be16(ip + 6) & 0x1fff;
    if (frag != 0) return NonIp{NonIp::Reason::fragment, kEtherIpv4};

    Packet p;
    p.proto = ip[9];
    p.src_ip = IpAddress::v4(std::array<std::uint8_t, 4>{ip[12], ip[13], ip[14], ip[15]});
    p.dst_ip = IpAddress::v4(std::array<std::uint8_t, 4>{ip[16], ip[17], ip[18], ip[19]});
    p.ip_len = total_len;
    auto l4 = decode_l4(bytes, off + ihl, p.proto);
    p.src_port = l4.src_port;
    p.dst_port = l4.dst_port;
    p.tcp_flags = l4.flags;
    const std::uint32_t headers = ihl + l4.header_len;
    p.payload_len = total_len > headers ? total_len - headers : 0;
    return p;
}

std::variant<Packet, NonIp> decode_ipv6(std::span<const std::uint8_t> bytes, std::size_t off) {
    if (bytes.size() < off + 40) truncated(off + 40, bytes.size(), off);
    const std::uint8_t* ip = &bytes[off];
    if ((ip[0] >> 4) != 6) {
        throw DecodeError(ErrorKind::decode_error, kModule, "ip version mismatch", off);
    }
    Packet p;
    std::array<std::uint8_t, 16> a{};
    std::memcpy(a.data(), ip + 8, 16);
    p.src_ip = IpAddress::v6(a);
    std::memcpy(a.data(), ip + 24, 16);
    p.dst_ip = IpAddress::v6(a);
    p.ip_len = 40u + be16(ip + 4);

    std::uint8_t next = ip[6];
    std::size_t cur = off + 40;
    // Walk the common extension headers up to the transport header.
    for (;;) {
        if (next == 0 || next == 43 || next == 60) {
            if (bytes.size() < cur + 2) truncated(cur + 2, bytes.size(), cur);
            next = bytes[cur];
            cur += (std::size_t(bytes[cur + 1]) + 1) * 8;
        } else if (next == 44) {
            if (bytes.size() < cur + 8) truncated(cur + 8, bytes.size(), cur);
            const std::uint16_t frag_off = be16(&bytes[cur + 2]) >> 3;
            if (frag_off != 0) return NonIp{NonIp::Reason::fragment, kEtherIpv6};
            next = bytes[cur];
            cur += 8;
        } else {
            break;
        }
    }
    p.proto = next;
    auto l4 = decode_l4(bytes, cur, p.proto);
    p.src_port = l4.src_port;
    p.dst_port = l4.dst_port;
    p.tcp_flags = l4.flags;
    const std::uint32_t headers = std::uint32_t(cur - off) + l4.header_len;
    p.payload_len = p.ip_len > headers ? p.ip_len - headers : 0;
    return p;
}

}  // namespace

bool PacketFilter::matches(const Packet& p) const noexcept {
    if (!protocols.empty() && !protocols.contains(p.proto)) return false;
    if (!ports.empty() && !ports.contains(p.src_port) && !ports.contains(p.dst_port)) return false;
    if (!prefixes.empty()) {
        bool hit = std::any_of(prefixes.begin(), prefixes.end(), [&](const IpPrefix& pre) {
            return pre.contains(p.src_ip) || pre.contains(p.dst_ip);
        });
        if (!hit) return false;
    }
    return true;
}

PacketFilter PacketFilter::from_strings(std::set<std::uint8_t> protocols,
                                        std::set<std::uint16_t> ports,
                                        const std::vector<std::string>& prefixes) {
    PacketFilter f;
    f.protocols = std::move(protocols);
    f.ports = std::move(ports);
    for (const auto& s : prefixes) f.prefixes.push_back(IpPrefix::parse(s));
    return f;
}

void IngestConfig::validate() const {
    if (sample_n < 1) throw Error(ErrorKind::config_error, kModule, "sample_n must be >= 1");
    if (mtu < 68) throw Error(ErrorKind::config_error, kModule, "mtu must be >= 68");
}

std::variant<Packet, NonIp> decode_frame(std::span<const std::uint8_t> bytes,
                                         std::uint32_t linktype, const DecodeOptions& opts) {
    std::variant<Packet, NonIp> out;
    if (linktype == kLinkEthernet) {
        if (bytes.size() < 14) truncated(14, bytes.size(), 0);
        std::size_t off = 12;
        std::uint16_t type = be16(&bytes[off]);
        off += 2;
        if (type == kEtherVlan) {
            if (bytes.size() < off + 4) truncated(off + 4, bytes.size(), off);
            type = be16(&bytes[off + 2]);
            off += 4;
            if (type == kEtherVlan || type == kEtherQinQ) {
                return NonIp{NonIp::Reason::unsupported_encapsulation, type};
            }
        } else if (type == kEtherQinQ || type == kEtherMpls) {
            return NonIp{NonIp::Reason::unsupported_encapsulation, type};
        }
        if (type == kEtherIpv4) {
            out = decode_ipv4(bytes, off);
        } else if (type == kEtherIpv6) {
            out = decode_ipv6(bytes, off);
        } else {
            return NonIp{NonIp::Reason::not_ip, type};
        }
    } else if (linktype == kLinkRaw) {
        if (bytes.empty()) truncated(1, 0, 0);
        const int version = bytes[0] >> 4;
        if (version == 4) {
            out = decode_ipv4(bytes, 0);
        } else if (version == 6) {
            out = decode_ipv6(bytes, 0);
        } else {
            throw DecodeError(ErrorKind::decode_error, kModule,
                              "ip version " + std::to_string(version), 0);
        }
    } else {
        throw Error(ErrorKind::unsupported_linktype, kModule,
                    "link type " + std::to_string(linktype));
    }
    if (auto* p = std::get_if<Packet>(&out)) {
        p->super_packet = opts.flag_oversize && p->ip_len > opts.mtu;
    }
    return out;
}

// ---------------------------------------------------------------------------

PcapReader::PcapReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorKind::io_error, kModule, "cannot open " + path);
    std::uint8_t hdr[24];
    in_.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got >= 4) {
        std::uint32_t magic;
        std::memcpy(&magic, hdr, 4);
        if (magic == kMagicMicro || magic == kMagicNano) {
            swapped_ = false;
        } else if (bswap32(magic) == kMagicMicro || bswap32(magic) == kMagicNano) {
            swapped_ = true;
            magic = bswap32(magic);
        } else {
            throw Error(ErrorKind::unsupported_format, kModule, path + ": bad magic");
        }
        nanosecond_ = magic == kMagicNano;
    }
    if (got < sizeof hdr) {
        throw DecodeError(ErrorKind::truncated_capture, kModule, path + ": short global header", got);
    }
    snaplen_ = read32(hdr + 16);
    linktype_ = read32(hdr + 20);
    if (linktype_ != kLinkEthernet && linktype_ != kLinkRaw) {
        throw Error(ErrorKind::unsupported_linktype, kModule,
                    path + ": link type " + std::to_string(linktype_));
    }
    offset_ = sizeof hdr;
}

std::uint32_t PcapReader::read32(const std::uint8_t* p) const noexcept {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return swapped_ ? bswap32(v) : v;
}

std::optional<RawRecord> PcapReader::next() {
    std::uint8_t hdr[16];
    in_.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) return std::nullopt;
    if (got < sizeof hdr) {
        throw DecodeError(ErrorKind::truncated_capture, kModule, path_ + ": short record header",
                          offset_);
    }
    RawRecord rec;
    rec.offset = offset_;
    const std::uint32_t sec = read32(hdr);
    const std::uint32_t sub = read32(hdr + 4);
    const std::uint32_t incl = read32(hdr + 8);
    rec.orig_len = read32(hdr + 12);
    if (incl > (1u << 28)) {
        throw DecodeError(ErrorKind::unsupported_format, kModule, path_ + ": implausible record length",
                          offset_ + 8);
    }
    const std::int64_t nanos = nanosecond_ ? std::int64_t(sub) : std::int64_t(sub) * 1000;
    rec.ts = Timestamp(Duration(std::int64_t(sec) * 1'000'000'000 + nanos));
    rec.data.resize(incl);
    in_.read(reinterpret_cast<char*>(rec.data.data()), incl);
    if (static_cast<std::size_t>(in_.gcount()) < incl) {
        throw DecodeError(ErrorKind::truncated_capture, kModule, path_ + ": short record body",
                          offset_ + sizeof hdr);
    }
    offset_ += sizeof hdr + incl;
    return rec;
}

Capture parse_capture(const std::string& path, const IngestConfig& cfg) {
    cfg.validate();
    PcapReader reader(path);
    Capture cap;
    auto& s = cap.summary;
    const DecodeOptions opts{cfg.mtu, cfg.snap_policy == OversizePolicy::flag};
    std::vector<Packet> decoded;
    while (auto rec = reader.next()) {
        ++s.total_frames;
        try {
            auto result = decode_frame(rec->data, reader.linktype(), opts);
            if (auto* p = std::get_if<Packet>(&result)) {
                p->ts = rec->ts;
                if (p->super_packet) ++s.super_packets;
                ++s.decoded;
                decoded.push_back(*p);
            } else {
                ++s.skipped;
                if (std::get<NonIp>(result).reason == NonIp::Reason::fragment) ++s.fragments;
            }
        } catch (const DecodeError& e) {
            if (e.kind() == ErrorKind::truncated_frame) {
                ++s.truncated;
            } else {
                ++s.skipped;
                ++s.malformed;
            }
        }
    }
    std::vector<Packet> kept = cfg.filter.empty() ? std::move(decoded)
                                                  : filter_stream(decoded, cfg.filter);
    s.filtered_out = s.decoded - kept.size();
    cap.packets = cfg.sample_n == 1 ? std::move(kept) : sample_stream(kept, cfg.sample_n);
    s.emitted = cap.packets.size();
    s.sampled_out = s.decoded - s.filtered_out - s.emitted;
    return cap;
}

std::vector<Packet> sample_stream(std::span<const Packet> stream, std::uint32_t n) {
    if (n == 0) throw Error(ErrorKind::invalid_argument, kModule, "sampling interval must be >= 1");
    std::vector<Packet> out;
    out.reserve((stream.size() + n - 1) / n);
    for (std::size_t i = 0; i < stream.size(); i += n) out.push_back(stream[i]);
    return out;
}

std::vector<Packet> filter_stream(std::span<const Packet> stream, const PacketFilter& filter) {
    std::vector<Packet> out;
    std::copy_if(stream.begin(), stream.end(), std::back_inserter(out),
                 [&](const Packet& p) { return filter.matches(p); });
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void push16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(std::uint8_t(v >> 8));
    b.push_back(std::uint8_t(v));
}

std::uint16_t ipv4_checksum(const std::uint8_t* h) {
    std::uint32_t sum = 0;
    for (int i = 0; i < 20; i += 2) sum += be16(h + i);
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return std::uint16_t(~sum);
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Packet& pkt, const FrameOptions& opts) {
    std::vector<std::uint8_t> b;
    if (opts.linktype == kLinkEthernet) {
        static constexpr std::uint8_t dst_mac[6] = {0x02, 0, 0, 0, 0, 0x02};
        static constexpr std::uint8_t src_mac[6] = {0x02, 0, 0, 0, 0, 0x01};
        b.insert(b.end(), dst_mac, dst_mac + 6);
        b.insert(b.end(), src_mac, src_mac + 6);
        if (opts.vlan) {
            push16(b, kEtherVlan);
            push16(b, *opts.vlan & 0x0fff);
        }
        if (opts.ethertype_override != 0) {
            push16(b, opts.ethertype_override);
            return b;
        }
        push16(b, pkt.src_ip.is_v6() ? kEtherIpv6 : kEtherIpv4);
    }
    const std::size_t ip_off = b.size();
    const std::uint32_t l4_len = pkt.proto == kProtoTcp ? 20 : pkt.proto == kProtoUdp ? 8 : 0;
    if (pkt.src_ip.is_v6()) {
        b.push_back(0x60);
        b.push_back(0);
        push16(b, 0);
        push16(b, std::uint16_t(pkt.ip_len - 40));
        b.push_back(pkt.proto);
        b.push_back(64);
        b.insert(b.end(), pkt.src_ip.bytes().begin(), pkt.src_ip.bytes().end());
        b.insert(b.end(), pkt.dst_ip.bytes().begin(), pkt.dst_ip.bytes().end());
    } else {
        b.push_back(0x45);
        b.push_back(0);
        push16(b, std::uint16_t(std::min<std::uint32_t>(pkt.ip_len, 0xffff)));
        push16(b, 0);       // id
        push16(b, 0x4000);  // DF
        b.push_back(64);
        b.push_back(pkt.proto);
        push16(b, 0);
        b.insert(b.end(), pkt.src_ip.bytes().begin(), pkt.src_ip.bytes().begin() + 4);
        b.insert(b.end(), pkt.dst_ip.bytes().begin(), pkt.dst_ip.bytes().begin() + 4);
        const std::uint16_t csum = ipv4_checksum(&b[ip_off]);
        b[ip_off + 10] = std::uint8_t(csum >> 8);
        b[ip_off + 11] = std::uint8_t(csum);
    }
    const std::size_t ip_hdr = b.size() - ip_off;
    if (pkt.proto == kProtoTcp) {
        push16(b, pkt.src_port);
        push16(b, pkt.dst_port);
        for (int i = 0; i < 8; ++i) b.push_back(0);  // seq, ack
        b.push_back(0x50);
        b.push_back(pkt.tcp_flags & 0x3f);
        push16(b, 0xffff);
        push16(b, 0);
        push16(b, 0);
    } else if (pkt.proto == kProtoUdp) {
        push16(b, pkt.src_port);
        push16(b, pkt.dst_port);
        push16(b, std::uint16_t(pkt.ip_len - ip_hdr));
        push16(b, 0);
    }
    const std::size_t used = ip_hdr + l4_len;
    if (pkt.ip_len > used) b.resize(b.size() + (pkt.ip_len - used), 0);
    return b;
}

PcapWriter::PcapWriter(const std::string& path, const WriterOptions& opts)
    : out_(path, std::ios::binary | std::ios::trunc), opts_(opts) {
    if (!out_) throw Error(ErrorKind::io_error, kModule, "cannot create " + path);
    put32(opts_.nanosecond ? kMagicNano : kMagicMicro);
    put16(2);
    put16(4);
    put32(0);
    put32(0);
    put32(opts_.snaplen);
    put32(opts_.linktype);
}

void PcapWriter::put32(std::uint32_t v) {
    std::uint8_t b[4];
    if (opts_.big_endian) {
        b[0] = std::uint8_t(v >> 24), b[1] = std::uint8_t(v >> 16), b[2] = std::uint8_t(v >> 8),
        b[3] = std::uint8_t(v);
    } else {
        b[3] = std::uint8_t(v >> 24), b[2] = std::uint8_t(v >> 16), b[1] = std::uint8_t(v >> 8),
        b[0] = std::uint8_t(v);
    }
    out_.write(reinterpret_cast<const char*>(b), 4);
}

void PcapWriter::put16(std::uint16_t v) {
    std::uint8_t b[2];
    if (opts_.big_endian) {
        b[0] = std::uint8_t(v >> 8), b[1] = std::uint8_t(v);
    } else {
        b[1] = std::uint8_t(v >> 8), b[0] = std::uint8_t(v);
    }
    out_.write(reinterpret_cast<const char*>(b), 2);
}

void PcapWriter::write_frame(Timestamp ts, std::span<const std::uint8_t> frame) {
    const std::int64_t ns = ts.time_since_epoch().count();
    const std::uint32_t sec = std::uint32_t(ns / 1'000'000'000);
    const std::uint32_t sub_ns = std::uint32_t(ns % 1'000'000'000);
    const std::uint32_t incl = std::uint32_t(std::min<std::size_t>(frame.size(), opts_.snaplen));
    put32(sec);
    put32(opts_.nanosecond ? sub_ns : sub_ns / 1000);
    put32(incl);
    put32(std::uint32_t(frame.size()));
    out_.write(reinterpret_cast<const char*>(frame.data()), incl);
}

void PcapWriter::write_packet(const Packet& pkt, std::optional<std::uint16_t> vlan) {
    FrameOptions fo;
    fo.linktype = opts_.linktype;
    fo.vlan = vlan;
    write_frame(pkt.ts, encode_frame(pkt, fo));
}

void PcapWriter::write_non_ip(Timestamp ts, std::uint16_t ethertype, std::size_t size) {
    FrameOptions fo;
    fo.ethertype_override = ethertype;
    auto frame = encode_frame(Packet{}, fo);
    if (frame.size() < size) frame.resize(size, 0);
    write_frame(ts, frame);
}

void PcapWriter::close() { out_.close(); }

}  // namespace flowcls::ingest
