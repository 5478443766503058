#include "flowcls/flow_meter.hpp"

#include <algorithm>
#include <cstring>

#include "flowcls/error.hpp"
#include "flowcls/hash.hpp"

namespace flowcls::meter {

namespace {

constexpr std::string_view kModule = "meter";

void pack_endpoint(std::byte*& out, const IpAddress& ip, std::uint16_t port) {
    *out++ = std::byte(ip.is_v6() ? 6 : 4);
    std::memcpy(out, ip.bytes().data(), 16);
    out += 16;
    *out++ = std::byte(port >> 8);
    *out++ = std::byte(port & 0xff);
}

IpAddress anonymize(const IpAddress& ip, Anonymization mode) {
    if (mode == Anonymization::truncate_v4_24 && ip.is_v4()) return ip.masked(24);
    return ip;
}

bool export_order(const FlowRecord& a, const FlowRecord& b) {
    if (a.flow_start() != b.flow_start()) return a.flow_start() < b.flow_start();
    auto ka = a.canonical_key(), kb = b.canonical_key();
    if (ka != kb) return ka < kb;
    return a.segment_index < b.segment_index;
}

}  // namespace

std::pair<CanonicalKey, Orientation> canonicalize(const FlowKey& key) noexcept {
    const Endpoint s = key.source();
    const Endpoint d = key.destination();
    if (s <= d) return {CanonicalKey{s, d, key.proto}, Orientation::forward};
    return {CanonicalKey{d, s, key.proto}, Orientation::backward};
}

std::uint64_t flow_hash(const FlowKey& key, std::uint64_t seed) noexcept {
    std::array<std::byte, 2 * 19 + 1> buf{};
    std::byte* p = buf.data();
    pack_endpoint(p, key.src_ip, key.src_port);
    pack_endpoint(p, key.dst_ip, key.dst_port);
    *p = std::byte(key.proto);
    return murmur64(buf, seed);
}

DualHash dual_hash(const FlowKey& key, std::uint64_t seed) noexcept {
    return {flow_hash(key, seed), flow_hash(key.reverse(), seed)};
}

std::size_t CanonicalKeyHash::operator()(const CanonicalKey& k) const noexcept {
    return static_cast<std::size_t>(
        flow_hash(FlowKey{k.lo.ip, k.hi.ip, k.lo.port, k.hi.port, k.proto}));
}

std::string_view to_string(ExportReason r) noexcept {
    switch (r) {
        case ExportReason::idle: return "idle";
        case ExportReason::active: return "active";
        case ExportReason::fin_rst: return "fin_rst";
        case ExportReason::pressure: return "pressure";
        case ExportReason::end_of_input: return "end_of_input";
    }
    return "unknown";
}

void DirStats::add(const Packet& p) {
    if (pkt_count == 0) {
        first_ts = last_ts = p.ts;
    } else {
        first_ts = std::min(first_ts, p.ts);
        last_ts = std::max(last_ts, p.ts);
        // Reordered arrivals contribute a zero gap rather than a negative one.
        piat.push(to_seconds(std::max(Duration::zero(), p.ts - prev_arrival)));
    }
    prev_arrival = p.ts;
    ++pkt_count;
    byte_count += p.ip_len;
    payload_bytes += p.payload_len;
    if (p.super_packet) ++super_packets;
    size.push(static_cast<double>(p.ip_len));
    for (std::size_t i = 0; i < flag_counts.size(); ++i) {
        if (p.tcp_flags & (1u << i)) ++flag_counts[i];
    }
}

Timestamp FlowRecord::flow_start() const noexcept {
    if (fwd.pkt_count == 0) return bwd.first_ts;
    if (bwd.pkt_count == 0) return fwd.first_ts;
    return std::min(fwd.first_ts, bwd.first_ts);
}

Timestamp FlowRecord::flow_end() const noexcept {
    if (fwd.pkt_count == 0) return bwd.last_ts;
    if (bwd.pkt_count == 0) return fwd.last_ts;
    return std::max(fwd.last_ts, bwd.last_ts);
}

void MeterConfig::validate() const {
    if (idle_timeout <= Duration::zero() || idle_timeout >= active_timeout) {
        throw Error(ErrorKind::config_error, kModule,
                    "timeouts must satisfy 0 < idle_timeout < active_timeout");
    }
    if (max_flows < 1) throw Error(ErrorKind::config_error, kModule, "max_flows must be >= 1");
    if (scan_interval < 1) throw Error(ErrorKind::config_error, kModule, "scan_interval must be >= 1");
    if (reorder_slack < Duration::zero()) {
        throw Error(ErrorKind::config_error, kModule, "reorder_slack must be >= 0");
    }
}

FlowCache::FlowCache(MeterConfig cfg) : cfg_(cfg) { cfg_.validate(); }

FlowCache::Iter FlowCache::find(const FlowKey& key, Orientation& dir) {
    if (cfg_.lookup == LookupStrategy::canonical) {
        auto hit = by_canonical_.find(canonicalize(key).first);
        if (hit == by_canonical_.end()) return lru_.end();
        // Direction is relative to the stored initiator, not the canonical order.
        dir = hit->second->rec.key == key ? Orientation::forward : Orientation::backward;
        return hit->second;
    }
    const DualHash h = dual_hash(key, cfg_.hash_seed);
    auto [b, e] = by_hash_.equal_range(h.fwd_id);
    for (auto it = b; it != e; ++it) {
        if (it->second->rec.key == key) {
            dir = Orientation::forward;
            return it->second;
        }
    }
    const FlowKey rev = key.reverse();
    std::tie(b, e) = by_hash_.equal_range(h.rev_id);
    for (auto it = b; it != e; ++it) {
        if (it->second->rec.key == rev) {
            dir = Orientation::backward;
            return it->second;
        }
    }
    return lru_.end();
}

FlowCache::Iter FlowCache::insert(const Packet& pkt) {
    Entry e;
    e.rec.key = FlowKey::of(pkt);
    e.ckey = canonicalize(e.rec.key).first;
    auto& seg = next_segment_[e.ckey];
    e.rec.segment_index = seg++;
    e.rec.splt.reserve(cfg_.splt_n);
    lru_.push_back(std::move(e));
    auto it = std::prev(lru_.end());
    if (cfg_.lookup == LookupStrategy::canonical) {
        by_canonical_.emplace(it->ckey, it);
    } else {
        it->initiator_hash = flow_hash(it->rec.key, cfg_.hash_seed);
        by_hash_.emplace(it->initiator_hash, it);
    }
    stats_.peak_resident = std::max(stats_.peak_resident, lru_.size());
    return it;
}

void FlowCache::erase(Iter it) {
    if (cfg_.lookup == LookupStrategy::canonical) {
        by_canonical_.erase(it->ckey);
    } else {
        auto [b, e] = by_hash_.equal_range(it->initiator_hash);
        for (auto h = b; h != e; ++h) {
            if (h->second == it) {
                by_hash_.erase(h);
                break;
            }
        }
    }
    lru_.erase(it);
}

FlowRecord FlowCache::take(Iter it, ExportReason reason) {
    FlowRecord rec = std::move(it->rec);
    erase(it);
    rec.export_reason = reason;
    rec.key.src_ip = anonymize(rec.key.src_ip, cfg_.anonymize);
    rec.key.dst_ip = anonymize(rec.key.dst_ip, cfg_.anonymize);
    ++stats_.exported;
    ++stats_.by_reason[static_cast<std::size_t>(reason)];
    return rec;
}

void FlowCache::update(Iter it, const Packet& pkt, Orientation dir) {
    FlowRecord& rec = it->rec;
    const bool first = rec.total_packets() == 0;
    if (rec.splt.size() < cfg_.splt_n) {
        SpltEntry s;
        s.direction = dir == Orientation::forward ? 1 : -1;
        s.ip_len = pkt.ip_len;
        s.gap = first ? Duration::zero() : std::max(Duration::zero(), pkt.ts - rec.last_arrival);
        rec.splt.push_back(s);
    }
    (dir == Orientation::forward ? rec.fwd : rec.bwd).add(pkt);
    rec.last_arrival = pkt.ts;
    lru_.splice(lru_.end(), lru_, it);
}

void FlowCache::scan(std::vector<FlowRecord>& out) {
    std::vector<std::pair<Iter, ExportReason>> expired;
    for (auto it = lru_.begin(); it != lru_.end(); ++it) {
        const FlowRecord& r = it->rec;
        if (watermark_ - r.flow_end() > cfg_.idle_timeout) {
            expired.emplace_back(it, ExportReason::idle);
        } else if (watermark_ - r.flow_start() >= cfg_.active_timeout) {
            expired.emplace_back(it, ExportReason::active);
        }
    }
    std::vector<FlowRecord> batch;
    batch.reserve(expired.size());
    for (auto& [it, reason] : expired) batch.push_back(take(it, reason));
    std::sort(batch.begin(), batch.end(), export_order);
    for (auto& r : batch) out.push_back(std::move(r));
}

std::vector<FlowRecord> FlowCache::process_packet(const Packet& pkt) {
    std::vector<FlowRecord> out;
    const FlowKey key = FlowKey::of(pkt);
    Orientation dir = Orientation::forward;

    if (seen_any_ && pkt.ts < watermark_ - cfg_.reorder_slack) {
        // Late packet: attribute only to a live flow, and only if the flow's
        // span stays inside the active timeout.
        ++stats_.late_packets;
        auto it = find(key, dir);
        if (it == lru_.end() || it->rec.flow_end() - pkt.ts >= cfg_.active_timeout) {
            ++stats_.dropped_late;
            return out;
        }
        ++stats_.packets;
        update(it, pkt, dir);
        return out;
    }

    watermark_ = seen_any_ ? std::max(watermark_, pkt.ts) : pkt.ts;
    seen_any_ = true;
    ++stats_.packets;
    if (stats_.packets % cfg_.scan_interval == 0) scan(out);

    auto it = find(key, dir);
    if (it != lru_.end()) {
        const FlowRecord& r = it->rec;
        if (pkt.ts - r.flow_end() > cfg_.idle_timeout) {
            out.push_back(take(it, ExportReason::idle));
            it = lru_.end();
        } else if (pkt.ts - r.flow_start() >= cfg_.active_timeout) {
            out.push_back(take(it, ExportReason::active));
            it = lru_.end();
        }
    }
    if (it == lru_.end()) {
        if (lru_.size() >= cfg_.max_flows) out.push_back(take(lru_.begin(), ExportReason::pressure));
        it = insert(pkt);
        dir = Orientation::forward;
    }
    update(it, pkt, dir);

    if (cfg_.honor_fin_rst && pkt.proto == ingest::kProtoTcp &&
        pkt.has(ingest::tcp_flag::fin | ingest::tcp_flag::rst)) {
        out.push_back(take(it, ExportReason::fin_rst));
    }
    return out;
}

std::vector<FlowRecord> FlowCache::flush() {
    std::vector<FlowRecord> out;
    out.reserve(lru_.size());
    while (!lru_.empty()) out.push_back(take(lru_.begin(), ExportReason::end_of_input));
    std::sort(out.begin(), out.end(), export_order);
    return out;
}

std::vector<FlowRecord> meter_packets(std::span<const Packet> packets, const MeterConfig& cfg,
                                      MeterStats* stats) {
    FlowCache cache(cfg);
    std::vector<FlowRecord> out;
    for (const auto& p : packets) {
        auto exported = cache.process_packet(p);
        std::move(exported.begin(), exported.end(), std::back_inserter(out));
    }
    auto rest = cache.flush();
    std::move(rest.begin(), rest.end(), std::back_inserter(out));
    if (stats) *stats = cache.stats();
    return out;
}

}  // namespace flowcls::meter
