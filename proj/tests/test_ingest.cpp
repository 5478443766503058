#include <doctest.h>

#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "flowcls/error.hpp"
#include "flowcls/ingest.hpp"
#include "support/test_support.hpp"

using namespace flowcls;
using namespace flowcls::ingest;
using flowcls::testing::make_packet;
using flowcls::testing::TempDir;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an exception");
    return ErrorKind::io_error;
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("empty capture yields no packets and zero totals") {
    TempDir dir;
    const auto path = dir.file("empty.pcap");
    { PcapWriter w(path); }
    auto cap = parse_capture(path, {});
    CHECK(cap.packets.empty());
    CHECK(cap.summary.total_frames == 0);
    CHECK(cap.summary.decoded == 0);
    CHECK(cap.summary.skipped == 0);
    CHECK(cap.summary.truncated == 0);
}

TEST_CASE("nanosecond magic keeps sub-microsecond timestamps") {
    TempDir dir;
    const auto path = dir.file("ns.pcap");
    auto p = make_packet(0, "10.0.0.1", 5000, "10.0.0.2", 53, kProtoUdp, 60);
    p.ts = Timestamp(Duration(1'000'000'500));
    {
        PcapWriter w(path, {.nanosecond = true});
        w.write_packet(p);
    }
    auto cap = parse_capture(path, {});
    REQUIRE(cap.packets.size() == 1);
    CHECK(format_seconds(cap.packets[0].ts) == "1.000000500");
    CHECK(cap.packets[0].ts.time_since_epoch().count() == 1'000'000'500);
}

TEST_CASE("microsecond magic scales to nanoseconds, both byte orders") {
    TempDir dir;
    for (bool be : {false, true}) {
        const auto path = dir.file(be ? "be.pcap" : "le.pcap");
        auto p = make_packet(2.000123, "10.0.0.1", 5000, "10.0.0.2", 53, kProtoUdp, 60);
        {
            PcapWriter w(path, {.nanosecond = false, .big_endian = be});
            w.write_packet(p);
        }
        PcapReader r(path);
        CHECK(r.swapped() == be);
        CHECK_FALSE(r.nanosecond());
        auto cap = parse_capture(path, {});
        REQUIRE(cap.packets.size() == 1);
        CHECK(cap.packets[0].ts.time_since_epoch().count() == 2'000'123'000);
    }
}

TEST_CASE("100 TCP frames and 5 ARP frames") {
    TempDir dir;
    const auto path = dir.file("mixed.pcap");
    {
        PcapWriter w(path);
        for (int i = 0; i < 105; ++i) {
            if (i % 21 == 20) {
                w.write_non_ip(Timestamp(from_seconds(i)), 0x0806);
            } else {
                w.write_packet(make_packet(i, "10.0.0.1", 40000, "10.0.0.2", 443, kProtoTcp, 100,
                                           tcp_flag::ack));
            }
        }
    }
    auto cap = parse_capture(path, {});
    CHECK(cap.packets.size() == 100);
    CHECK(cap.summary.skipped == 5);
    CHECK(cap.summary.total_frames == 105);
    CHECK(cap.summary.decoded + cap.summary.skipped + cap.summary.truncated ==
          cap.summary.total_frames);
}

TEST_CASE("minimal SYN frame decodes with empty payload") {
    auto p = make_packet(0, "10.0.0.1", 1234, "10.0.0.2", 80, kProtoTcp, 40, tcp_flag::syn);
    auto frame = encode_frame(p);
    auto out = decode_frame(frame, kLinkEthernet);
    auto* d = std::get_if<Packet>(&out);
    REQUIRE(d != nullptr);
    CHECK(d->proto == kProtoTcp);
    CHECK(d->tcp_flags == tcp_flag::syn);
    CHECK(d->payload_len == 0);
    CHECK(d->ip_len == 40);
}

TEST_CASE("jumbo UDP frame is flagged as a super-packet") {
    auto p = make_packet(0, "10.0.0.1", 1234, "10.0.0.2", 9999, kProtoUdp, 9000);
    auto frame = encode_frame(p);
    auto d = std::get<Packet>(decode_frame(frame, kLinkEthernet, {.mtu = 1500}));
    CHECK(d.super_packet);
    auto kept = std::get<Packet>(decode_frame(frame, kLinkEthernet, {.mtu = 1500, .flag_oversize = false}));
    CHECK_FALSE(kept.super_packet);
    auto big_mtu = std::get<Packet>(decode_frame(frame, kLinkEthernet, {.mtu = 9000}));
    CHECK_FALSE(big_mtu.super_packet);
}

TEST_CASE("802.1Q tag is transparent") {
    auto p = make_packet(0, "10.1.1.1", 999, "10.2.2.2", 53, kProtoUdp, 80);
    auto plain = std::get<Packet>(decode_frame(encode_frame(p), kLinkEthernet));
    auto tagged = std::get<Packet>(decode_frame(encode_frame(p, {.vlan = 42}), kLinkEthernet));
    CHECK(plain == tagged);
}

TEST_CASE("QinQ and non-first fragments are skipped as non-IP") {
    auto p = make_packet(0, "10.1.1.1", 999, "10.2.2.2", 53, kProtoUdp, 80);
    auto frame = encode_frame(p, {.vlan = 7});
    // Rewrite the inner ethertype into a second VLAN tag.
    frame[16] = 0x81;
    frame[17] = 0x00;
    auto r = decode_frame(frame, kLinkEthernet);
    REQUIRE(std::holds_alternative<NonIp>(r));
    CHECK(std::get<NonIp>(r).reason == NonIp::Reason::unsupported_encapsulation);

    auto frag = encode_frame(p);
    frag[14 + 6] = 0x00;
    frag[14 + 7] = 0x10;  // fragment offset 16
    auto f = decode_frame(frag, kLinkEthernet);
    REQUIRE(std::holds_alternative<NonIp>(f));
    CHECK(std::get<NonIp>(f).reason == NonIp::Reason::fragment);
}

TEST_CASE("IPv6 and raw-IP frames decode") {
    auto p = make_packet(0, "2001:db8::1", 5555, "2001:db8::2", 443, kProtoTcp, 80, tcp_flag::psh);
    auto d = std::get<Packet>(decode_frame(encode_frame(p), kLinkEthernet));
    CHECK(d.src_ip == p.src_ip);
    CHECK(d.dst_port == 443);
    CHECK(d.payload_len == 80 - 40 - 20);
    auto raw = std::get<Packet>(decode_frame(encode_frame(p, {.linktype = kLinkRaw}), kLinkRaw));
    CHECK(raw == d);
}

TEST_CASE("malformed and truncated frames raise with offsets") {
    auto p = make_packet(0, "10.0.0.1", 1, "10.0.0.2", 2, kProtoTcp, 60);
    auto frame = encode_frame(p);
    auto bad = frame;
    bad[14] = 0x35;  // version 3
    CHECK(kind_of([&] { decode_frame(bad, kLinkEthernet); }) == ErrorKind::decode_error);
    auto short_ihl = frame;
    short_ihl[14] = 0x44;
    CHECK(kind_of([&] { decode_frame(short_ihl, kLinkEthernet); }) == ErrorKind::decode_error);
    std::vector<std::uint8_t> cut(frame.begin(), frame.begin() + 14 + 20 + 10);
    try {
        decode_frame(cut, kLinkEthernet);
        FAIL("expected truncation");
    } catch (const DecodeError& e) {
        CHECK(e.kind() == ErrorKind::truncated_frame);
        CHECK(e.offset() == 34);
    }
    CHECK(kind_of([&] { decode_frame(frame, 113); }) == ErrorKind::unsupported_linktype);
}

TEST_CASE("capture-level errors") {
    TempDir dir;
    const auto bad_magic = dir.file("bad.pcap");
    write_bytes(bad_magic, std::vector<std::uint8_t>(24, 0x11));
    CHECK(kind_of([&] { parse_capture(bad_magic, {}); }) == ErrorKind::unsupported_format);

    const auto good = dir.file("good.pcap");
    {
        PcapWriter w(good);
        w.write_packet(make_packet(1, "10.0.0.1", 1, "10.0.0.2", 2, kProtoUdp, 60));
    }
    std::ifstream in(good, std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(24 + 10);
    const auto cut = dir.file("cut.pcap");
    write_bytes(cut, bytes);
    try {
        parse_capture(cut, {});
        FAIL("expected truncated capture");
    } catch (const DecodeError& e) {
        CHECK(e.kind() == ErrorKind::truncated_capture);
        CHECK(e.offset() == 24);
    }

    const auto linktype = dir.file("lt.pcap");
    { PcapWriter w(linktype, {.linktype = 113}); }
    CHECK(kind_of([&] { parse_capture(linktype, {}); }) == ErrorKind::unsupported_linktype);
}

TEST_CASE("writer round-trip preserves every packet field") {
    std::mt19937_64 rng(7);
    auto packets = flowcls::testing::random_traffic(rng, 2000, 30, 300);
    packets.push_back(make_packet(400, "2001:db8::5", 4000, "2001:db8::6", 53, kProtoUdp, 120));
    packets.push_back(make_packet(401, "10.9.9.9", 0, "10.8.8.8", 0, kProtoIcmp, 84));
    packets.push_back(make_packet(402, "10.9.9.9", 7, "10.8.8.8", 9, kProtoUdp, 9000));
    TempDir dir;
    const auto path = dir.file("rt.pcap");
    flowcls::testing::write_capture(path, packets);
    auto cap = parse_capture(path, {});
    REQUIRE(cap.packets.size() == packets.size());
    for (std::size_t i = 0; i < packets.size(); ++i) CHECK(cap.packets[i] == packets[i]);
    CHECK(cap.summary.super_packets == 1);
}

TEST_CASE("sampling") {
    std::vector<Packet> s;
    for (int i = 0; i < 10; ++i) s.push_back(make_packet(i, "10.0.0.1", 1, "10.0.0.2", 2, kProtoUdp, 60));
    CHECK(sample_stream(s, 1) == s);
    auto every3 = sample_stream(s, 3);
    REQUIRE(every3.size() == 4);
    CHECK(every3[0] == s[0]);
    CHECK(every3[1] == s[3]);
    CHECK(every3[2] == s[6]);
    CHECK(every3[3] == s[9]);
    CHECK(kind_of([&] { sample_stream(s, 0); }) == ErrorKind::invalid_argument);
    for (std::uint32_t n = 1; n <= 12; ++n) CHECK(sample_stream(s, n).size() == (s.size() + n - 1) / n);
}

TEST_CASE("1-in-4 sampling inflates mean inter-arrival time about fourfold") {
    std::mt19937_64 rng(20240601);
    std::exponential_distribution<double> gap(1.0 / 0.01);  // mean 10 ms
    std::vector<Packet> s;
    double t = 0;
    for (int i = 0; i < 100000; ++i) {
        t += gap(rng);
        s.push_back(make_packet(t, "10.0.0.1", 1, "10.0.0.2", 2, kProtoUdp, 60));
    }
    auto mean_gap = [](const std::vector<Packet>& v) {
        return to_seconds(v.back().ts - v.front().ts) / double(v.size() - 1);
    };
    const double tau = mean_gap(s);
    const double sampled = mean_gap(sample_stream(s, 4));
    CHECK(sampled == doctest::Approx(4 * tau).epsilon(0.10));
}

TEST_CASE("filtering") {
    std::vector<Packet> s = {
        make_packet(0, "10.1.2.3", 5000, "172.16.0.1", 443, kProtoTcp, 60),
        make_packet(1, "192.168.0.1", 5001, "172.16.0.2", 443, kProtoUdp, 60),
        make_packet(2, "192.168.0.1", 5002, "172.16.0.3", 80, kProtoTcp, 60),
    };
    CHECK(filter_stream(s, {}) == s);
    PacketFilter tls;
    tls.protocols = {kProtoTcp};
    tls.ports = {443};
    auto only = filter_stream(s, tls);
    REQUIRE(only.size() == 1);
    CHECK(only[0] == s[0]);
    auto pre = PacketFilter::from_strings({}, {}, {"10.0.0.0/8"});
    auto p10 = filter_stream(s, pre);
    REQUIRE(p10.size() == 1);
    CHECK(p10[0].src_ip.to_string() == "10.1.2.3");
    CHECK(kind_of([] { PacketFilter::from_strings({}, {}, {"10.0.0.0/33"}); }) ==
          ErrorKind::invalid_argument);
    CHECK(kind_of([] { PacketFilter::from_strings({}, {}, {"not-an-ip"}); }) ==
          ErrorKind::invalid_argument);
}

TEST_CASE("filter and sample are deterministic but do not commute") {
    std::vector<Packet> s;
    for (int i = 0; i < 40; ++i) {
        s.push_back(make_packet(i, "10.0.0.1", 1, "10.0.0.2", i % 2 ? 443 : 80, kProtoTcp, 60));
    }
    PacketFilter f;
    f.ports = {443};
    auto a1 = sample_stream(filter_stream(s, f), 3);
    auto a2 = sample_stream(filter_stream(s, f), 3);
    auto b1 = filter_stream(sample_stream(s, 3), f);
    auto b2 = filter_stream(sample_stream(s, 3), f);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
    CHECK(a1 != b1);
}

TEST_CASE("config validation") {
    IngestConfig cfg;
    cfg.sample_n = 0;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::config_error);
    cfg.sample_n = 1;
    cfg.mtu = 60;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::config_error);
}
