#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flowcls/ingest.hpp"

namespace flowcls::synth {

/// Deterministic labelled traffic: interactive SSH (tcp/22), DNS lookups
/// (udp/53), HTTPS downloads (tcp/443), a UDP media stream to 203.0.113.0/24
/// that only the label map identifies, and a trickle of unlabelled TCP.
struct SynthConfig {
    std::uint64_t seed = 7;
    std::size_t flows_per_class = 120;
    std::size_t unknown_flows = 10;
    std::size_t clients = 40;
    double horizon_seconds = 900;

    void validate() const;
};

/// Packets sorted by timestamp (stable).
std::vector<ingest::Packet> generate(const SynthConfig& cfg);

struct SynthSummary {
    std::size_t packets = 0;
    std::size_t flows = 0;
};

SynthSummary write_capture(const std::string& path, const SynthConfig& cfg);

/// Label map naming the streaming servers.
std::string label_map_text();

}  // namespace flowcls::synth
