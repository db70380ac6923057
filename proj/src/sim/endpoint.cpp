#include "ringboot/sim/endpoint.hpp"
#include "ringboot/sim/time.hpp"

#include <cstdio>
#include <cstdlib>

namespace ringboot::sim {

std::string format_seconds(Time t)
{
    char buf[40];
    bool neg = t < 0;
    if (neg)
        t = -t;
    std::snprintf(buf, sizeof(buf), "%s%lld.%06lld", neg ? "-" : "",
        static_cast<long long>(t / kSecond), static_cast<long long>(t % kSecond));
    return buf;
}

std::string format_ip(std::uint32_t ip)
{
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (ip >> 24) & 0xFF, (ip >> 16) & 0xFF,
        (ip >> 8) & 0xFF, ip & 0xFF);
    return buf;
}

std::string Endpoint::to_string() const
{
    return format_ip(ip) + ":" + std::to_string(port);
}

std::optional<std::uint32_t> parse_ip(std::string_view text)
{
    std::uint32_t parts[4];
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        if (pos >= text.size() || text[pos] < '0' || text[pos] > '9')
            return std::nullopt;
        std::uint32_t v = 0;
        std::size_t digits = 0;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            v = v * 10 + std::uint32_t(text[pos] - '0');
            if (v > 255)
                return std::nullopt;
            ++pos;
            ++digits;
        }
        if (digits == 0 || digits > 3)
            return std::nullopt;
        parts[i] = v;
        if (i < 3) {
            if (pos >= text.size() || text[pos] != '.')
                return std::nullopt;
            ++pos;
        }
    }
    if (pos != text.size())
        return std::nullopt;
    return (parts[0] << 24) | (parts[1] << 16) | (parts[2] << 8) | parts[3];
}

std::optional<Endpoint> parse_endpoint(std::string_view text)
{
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos)
        return std::nullopt;
    auto ip = parse_ip(text.substr(0, colon));
    if (!ip)
        return std::nullopt;
    auto port_text = text.substr(colon + 1);
    if (port_text.empty() || port_text.size() > 5)
        return std::nullopt;
    std::uint32_t port = 0;
    for (char c : port_text) {
        if (c < '0' || c > '9')
            return std::nullopt;
        port = port * 10 + std::uint32_t(c - '0');
    }
    if (port > 65535)
        return std::nullopt;
    return Endpoint{*ip, std::uint16_t(port)};
}

} // namespace ringboot::sim
