#include "flowcls/synth.hpp"

#include <algorithm>
#include <random>

#include "flowcls/error.hpp"

namespace flowcls::synth {

namespace {

namespace flag = ingest::tcp_flag;

struct Endpoint {
    IpAddress ip;
    std::uint16_t port = 0;
};

class Flow {
public:
    Flow(std::vector<ingest::Packet>& out, Endpoint client, Endpoint server, std::uint8_t proto, double t)
        : out_(out), client_(client), server_(server), proto_(proto), t_(t) {}

    void up(std::uint32_t ip_len, std::uint8_t flags = flag::ack) { emit(true, ip_len, flags); }
    void down(std::uint32_t ip_len, std::uint8_t flags = flag::ack) { emit(false, ip_len, flags); }
    void wait(double seconds) { t_ += seconds; }

    void handshake(double rtt) {
        up(60, flag::syn);
        wait(rtt / 2);
        down(60, flag::syn | flag::ack);
        wait(rtt / 2);
        up(52);
    }

    void close(double rtt) {
        up(52, flag::fin | flag::ack);
        wait(rtt / 2);
        down(52, flag::fin | flag::ack);
        wait(rtt / 2);
        up(52);
    }

private:
    void emit(bool from_client, std::uint32_t ip_len, std::uint8_t flags) {
        const auto& a = from_client ? client_ : server_;
        const auto& b = from_client ? server_ : client_;
        ingest::Packet p;
        p.ts = Timestamp(std::chrono::duration_cast<Duration>(std::chrono::duration<double>(t_)));
        p.src_ip = a.ip;
        p.dst_ip = b.ip;
        p.src_port = a.port;
        p.dst_port = b.port;
        p.proto = proto_;
        const std::uint32_t l4 = proto_ == ingest::kProtoTcp ? 20 : 8;
        p.ip_len = std::max(ip_len, 20 + l4);
        p.payload_len = p.ip_len - 20 - l4;
        p.tcp_flags = proto_ == ingest::kProtoTcp ? flags : 0;
        out_.push_back(p);
    }

    std::vector<ingest::Packet>& out_;
    Endpoint client_, server_;
    std::uint8_t proto_;
    double t_;
};

class Generator {
public:
    Generator(const SynthConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

    std::vector<ingest::Packet> run() {
        for (std::size_t i = 0; i < cfg_.flows_per_class; ++i) {
            ssh();
            dns();
            https();
            stream();
        }
        for (std::size_t i = 0; i < cfg_.unknown_flows; ++i) unknown();
        std::stable_sort(packets_.begin(), packets_.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });
        return std::move(packets_);
    }

    std::size_t flows() const noexcept { return flows_; }

private:
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::uint32_t size(std::uint32_t lo, std::uint32_t hi) {
        return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng_);
    }
    std::size_t count(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
    double exp_gap(double mean) { return std::exponential_distribution<double>(1.0 / mean)(rng_); }

    Endpoint client() {
        const auto host = static_cast<std::uint32_t>(count(0, cfg_.clients - 1));
        const auto port = static_cast<std::uint16_t>(20000 + (next_port_++ % 40000));
        return {IpAddress::v4((10u << 24) | (host / 200 << 8) | (host % 200 + 10)), port};
    }

    static Endpoint server(std::uint32_t base, std::uint32_t host, std::uint16_t port) {
        return {IpAddress::v4(base | host), port};
    }

    Flow start(Endpoint server, std::uint8_t proto) {
        ++flows_;
        return Flow(packets_, client(), server, proto, uniform(0, cfg_.horizon_seconds));
    }

    void ssh() {
        const double rtt = uniform(0.02, 0.08);
        auto f = start(server(0xC6336400u, static_cast<std::uint32_t>(count(10, 14)), 22), ingest::kProtoTcp);
        f.handshake(rtt);
        for (std::size_t i = 0, n = count(15, 50); i < n; ++i) {
            f.wait(exp_gap(0.4));
            f.up(size(80, 160), flag::psh | flag::ack);
            f.wait(rtt / 2);
            f.down(size(80, 240), flag::psh | flag::ack);
        }
        f.wait(exp_gap(0.5));
        f.close(rtt);
    }

    void dns() {
        auto f = start(server(0xC6336400u, 53, 53), ingest::kProtoUdp);
        for (std::size_t i = 0, n = count(1, 2); i < n; ++i) {
            f.up(size(60, 90));
            f.wait(uniform(0.005, 0.04));
            f.down(size(110, 420));
            f.wait(uniform(0.01, 0.2));
        }
    }

    void https() {
        const double rtt = uniform(0.01, 0.05);
        auto f = start(server(0xC0000200u, static_cast<std::uint32_t>(count(20, 40)), 443), ingest::kProtoTcp);
        f.handshake(rtt);
        f.up(size(500, 700), flag::psh | flag::ack);
        f.wait(rtt / 2);
        f.down(size(1200, 1500), flag::psh | flag::ack);
        f.wait(rtt);
        for (std::size_t b = 0, bursts = count(2, 5); b < bursts; ++b) {
            f.up(size(300, 600), flag::psh | flag::ack);
            f.wait(rtt / 2);
            for (std::size_t i = 0, n = count(8, 25); i < n; ++i) {
                f.down(size(1400, 1500));
                f.wait(uniform(0.001, 0.004));
                if (i % 2 == 1) f.up(52);
            }
            f.wait(exp_gap(1.0));
        }
        f.close(rtt);
    }

    void stream() {
        auto f = start(server(0xCB007100u, static_cast<std::uint32_t>(count(5, 9)), 5004), ingest::kProtoUdp);
        f.up(size(100, 140));
        f.wait(uniform(0.02, 0.06));
        for (std::size_t i = 0, n = count(60, 160); i < n; ++i) {
            f.down(size(1000, 1300));
            f.wait(0.02 + uniform(-0.003, 0.003));
            if (i % 50 == 49) f.up(size(70, 90));
        }
    }

    void unknown() {
        const double rtt = uniform(0.02, 0.1);
        auto f = start(server(0xC0000200u, 99, 9000), ingest::kProtoTcp);
        f.handshake(rtt);
        for (std::size_t i = 0, n = count(2, 6); i < n; ++i) {
            f.up(size(200, 900), flag::psh | flag::ack);
            f.wait(rtt);
            f.down(size(60, 300), flag::psh | flag::ack);
        }
        f.close(rtt);
    }

    const SynthConfig& cfg_;
    std::mt19937_64 rng_;
    std::vector<ingest::Packet> packets_;
    std::size_t flows_ = 0;
    std::uint32_t next_port_ = 0;
};

}  // namespace

void SynthConfig::validate() const {
    if (flows_per_class < 1) throw Error(ErrorKind::config_error, "synth", "flows_per_class must be at least 1");
    if (clients < 1 || clients > 50000) throw Error(ErrorKind::config_error, "synth", "clients must be in [1, 50000]");
    if (!(horizon_seconds > 0)) throw Error(ErrorKind::config_error, "synth", "horizon_seconds must be positive");
}

std::vector<ingest::Packet> generate(const SynthConfig& cfg) {
    cfg.validate();
    return Generator(cfg).run();
}

SynthSummary write_capture(const std::string& path, const SynthConfig& cfg) {
    cfg.validate();
    Generator g(cfg);
    const auto packets = g.run();
    ingest::WriterOptions opts;
    opts.snaplen = 96;  // headers only; lengths come from the IP header
    ingest::PcapWriter w(path, opts);
    for (const auto& p : packets) w.write_packet(p);
    w.close();
    return {packets.size(), g.flows()};
}

std::string label_map_text() {
    return "ip_or_prefix,label,confidence\n"
           "203.0.113.0/24,STREAMING,high\n";
}

}  // namespace flowcls::synth
