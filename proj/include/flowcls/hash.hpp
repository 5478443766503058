#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace flowcls {

/// MurmurHash64A over a byte span.
std::uint64_t murmur64(std::span<const std::byte> data, std::uint64_t seed) noexcept;

inline std::uint64_t murmur64(std::string_view s, std::uint64_t seed) noexcept {
    return murmur64(std::as_bytes(std::span(s.data(), s.size())), seed);
}

/// Lowercase hex SHA-256 digest. Used for artifact lineage.
std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::string& path);

}  // namespace flowcls
