#include "flowcls/net.hpp"

#include <arpa/inet.h>

#include <charconv>
#include <cstdio>
#include <cstring>

#include "flowcls/error.hpp"

namespace flowcls {

namespace {
constexpr std::int64_t kNanosPerSecond = 1'000'000'000;
}

std::string format_seconds(Duration d) {
    std::int64_t ns = d.count();
    bool negative = ns < 0;
    // Avoid overflow on negation of INT64_MIN by working in unsigned space.
    std::uint64_t mag = negative ? std::uint64_t(0) - std::uint64_t(ns) : std::uint64_t(ns);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%llu.%09llu", negative ? "-" : "",
                  static_cast<unsigned long long>(mag / kNanosPerSecond),
                  static_cast<unsigned long long>(mag % kNanosPerSecond));
    return buf;
}

std::string format_seconds(Timestamp ts) { return format_seconds(ts.time_since_epoch()); }

Timestamp parse_seconds(std::string_view text) {
    auto fail = [&]() -> Timestamp {
        throw Error(ErrorKind::value_error, "net", "malformed timestamp '" + std::string(text) + "'");
    };
    if (text.empty()) return fail();
    bool negative = false;
    if (text.front() == '-') {
        negative = true;
        text.remove_prefix(1);
    }
    auto dot = text.find('.');
    std::string_view whole = text.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    if (whole.empty() || frac.size() > 9) return fail();
    std::int64_t secs = 0;
    auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), secs);
    if (ec != std::errc{} || p != whole.data() + whole.size()) return fail();
    std::int64_t nanos = 0;
    for (std::size_t i = 0; i < 9; ++i) {
        nanos *= 10;
        if (i < frac.size()) {
            char c = frac[i];
            if (c < '0' || c > '9') return fail();
            nanos += c - '0';
        }
    }
    std::int64_t total = secs * kNanosPerSecond + nanos;
    return Timestamp(Duration(negative ? -total : total));
}

double to_seconds(Duration d) noexcept { return static_cast<double>(d.count()) * 1e-9; }

Duration from_seconds(double seconds) noexcept {
    return Duration(static_cast<std::int64_t>(seconds * 1e9 + (seconds >= 0 ? 0.5 : -0.5)));
}

IpAddress IpAddress::v4(std::uint32_t host_order) noexcept {
    IpAddress a;
    a.bytes_[0] = std::uint8_t(host_order >> 24);
    a.bytes_[1] = std::uint8_t(host_order >> 16);
    a.bytes_[2] = std::uint8_t(host_order >> 8);
    a.bytes_[3] = std::uint8_t(host_order);
    return a;
}

IpAddress IpAddress::v4(std::array<std::uint8_t, 4> octets) noexcept {
    IpAddress a;
    std::memcpy(a.bytes_.data(), octets.data(), 4);
    return a;
}

IpAddress IpAddress::v6(const std::array<std::uint8_t, 16>& bytes) noexcept {
    IpAddress a;
    a.is_v6_ = true;
    a.bytes_ = bytes;
    return a;
}

std::optional<IpAddress> IpAddress::parse(std::string_view text) {
    std::string s(text);
    if (s.find(':') != std::string::npos) {
        std::array<std::uint8_t, 16> b{};
        if (inet_pton(AF_INET6, s.c_str(), b.data()) != 1) return std::nullopt;
        return v6(b);
    }
    std::array<std::uint8_t, 4> b{};
    if (inet_pton(AF_INET, s.c_str(), b.data()) != 1) return std::nullopt;
    return v4(b);
}

std::uint32_t IpAddress::v4_value() const noexcept {
    return (std::uint32_t(bytes_[0]) << 24) | (std::uint32_t(bytes_[1]) << 16) |
           (std::uint32_t(bytes_[2]) << 8) | std::uint32_t(bytes_[3]);
}

IpAddress IpAddress::masked(unsigned bits) const noexcept {
    IpAddress out = *this;
    const unsigned total = unsigned(width()) * 8;
    for (unsigned i = 0; i < total; ++i) {
        if (i >= bits) out.bytes_[i / 8] &= std::uint8_t(~(0x80u >> (i % 8)));
    }
    return out;
}

std::string IpAddress::to_string() const {
    char buf[INET6_ADDRSTRLEN];
    if (is_v6_) {
        inet_ntop(AF_INET6, bytes_.data(), buf, sizeof buf);
    } else {
        inet_ntop(AF_INET, bytes_.data(), buf, sizeof buf);
    }
    return buf;
}

IpPrefix::IpPrefix(IpAddress network, unsigned length)
    : network_(network.masked(length)), length_(length) {
    if (length > network.width() * 8) {
        throw Error(ErrorKind::invalid_argument, "net",
                    "prefix length " + std::to_string(length) + " exceeds address width");
    }
}

IpPrefix IpPrefix::parse(std::string_view text) {
    auto slash = text.find('/');
    auto addr = IpAddress::parse(text.substr(0, slash));
    if (!addr) {
        throw Error(ErrorKind::invalid_argument, "net", "invalid prefix '" + std::string(text) + "'");
    }
    unsigned len = unsigned(addr->width() * 8);
    if (slash != std::string_view::npos) {
        auto digits = text.substr(slash + 1);
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), len);
        if (digits.empty() || ec != std::errc{} || p != digits.data() + digits.size() ||
            len > addr->width() * 8) {
            throw Error(ErrorKind::invalid_argument, "net",
                        "invalid prefix '" + std::string(text) + "'");
        }
    }
    return IpPrefix(*addr, len);
}

bool IpPrefix::contains(const IpAddress& addr) const noexcept {
    if (addr.is_v6() != network_.is_v6()) return false;
    return addr.masked(length_) == network_;
}

std::string IpPrefix::to_string() const {
    return network_.to_string() + "/" + std::to_string(length_);
}

}  // namespace flowcls
