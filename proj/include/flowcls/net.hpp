#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace flowcls {

using Duration = std::chrono::nanoseconds;
using Timestamp = std::chrono::sys_time<Duration>;

/// Decimal seconds with exactly nine fractional digits, e.g. "1.000000500".
std::string format_seconds(Timestamp ts);
std::string format_seconds(Duration d);

/// Inverse of format_seconds; accepts fewer than nine fractional digits.
/// Throws Error(value_error) on malformed input.
Timestamp parse_seconds(std::string_view text);

double to_seconds(Duration d) noexcept;
Duration from_seconds(double seconds) noexcept;

/// IPv4 or IPv6 address. IPv4 occupies the first four bytes. The total order
/// places every IPv4 address before every IPv6 address, then compares bytes.
class IpAddress {
public:
    IpAddress() = default;

    static IpAddress v4(std::uint32_t host_order) noexcept;
    static IpAddress v4(std::array<std::uint8_t, 4> octets) noexcept;
    static IpAddress v6(const std::array<std::uint8_t, 16>& bytes) noexcept;

    /// Parses dotted-quad or RFC 4291 text. Returns nullopt if malformed.
    static std::optional<IpAddress> parse(std::string_view text);

    bool is_v4() const noexcept { return !is_v6_; }
    bool is_v6() const noexcept { return is_v6_; }
    std::size_t width() const noexcept { return is_v6_ ? 16 : 4; }
    const std::array<std::uint8_t, 16>& bytes() const noexcept { return bytes_; }
    std::uint32_t v4_value() const noexcept;

    /// Keeps the leading `bits` bits and zeroes the rest.
    IpAddress masked(unsigned bits) const noexcept;

    std::string to_string() const;

    friend auto operator<=>(const IpAddress&, const IpAddress&) = default;

private:
    bool is_v6_ = false;
    std::array<std::uint8_t, 16> bytes_{};
};

class IpPrefix {
public:
    IpPrefix(IpAddress network, unsigned length);

    /// "10.0.0.0/8", "2001:db8::/32" or a bare address (full-length prefix).
    /// Throws Error(invalid_argument) on malformed text.
    static IpPrefix parse(std::string_view text);

    bool contains(const IpAddress& addr) const noexcept;
    const IpAddress& network() const noexcept { return network_; }
    unsigned length() const noexcept { return length_; }
    std::string to_string() const;

    friend auto operator<=>(const IpPrefix&, const IpPrefix&) = default;

private:
    IpAddress network_;
    unsigned length_;
};

}  // namespace flowcls
