#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ringboot::sim {

// IPv4 address + UDP port. ip is host byte order.
struct Endpoint {
    std::uint32_t ip = 0;
    std::uint16_t port = 0;

    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;

    bool is_zero() const { return ip == 0 && port == 0; }
    std::string to_string() const;
};

std::string format_ip(std::uint32_t ip);
std::optional<std::uint32_t> parse_ip(std::string_view text);
std::optional<Endpoint> parse_endpoint(std::string_view text); // "a.b.c.d:port"

} // namespace ringboot::sim
