#include "ringboot/ids/address.hpp"

namespace ringboot::ids {

std::string_view to_string(AddressScheme s)
{
    switch (s) {
    case AddressScheme::Udp:
        return "udp";
    case AddressScheme::Tcp:
        return "tcp";
    case AddressScheme::Brunet:
        return "brunet";
    case AddressScheme::Subring:
        return "subring";
    case AddressScheme::Xmpp:
        return "xmpp";
    }
    return "?";
}

std::string TransportAddress::to_string() const
{
    std::string out(ids::to_string(scheme));
    out += "://";
    switch (scheme) {
    case AddressScheme::Udp:
    case AddressScheme::Tcp:
        out += endpoint.to_string();
        break;
    case AddressScheme::Brunet:
    case AddressScheme::Subring:
        out += node.to_hex();
        break;
    case AddressScheme::Xmpp:
        out += jid;
        break;
    }
    return out;
}

TransportAddress TransportAddress::udp(const sim::Endpoint& e)
{
    return TransportAddress { AddressScheme::Udp, e, {}, {} };
}

TransportAddress TransportAddress::tcp(const sim::Endpoint& e)
{
    return TransportAddress { AddressScheme::Tcp, e, {}, {} };
}

TransportAddress TransportAddress::brunet(const NodeId& n)
{
    return TransportAddress { AddressScheme::Brunet, {}, n, {} };
}

TransportAddress TransportAddress::subring(const NodeId& n)
{
    return TransportAddress { AddressScheme::Subring, {}, n, {} };
}

TransportAddress TransportAddress::xmpp(std::string jid)
{
    return TransportAddress { AddressScheme::Xmpp, {}, {}, std::move(jid) };
}

namespace {

    bool valid_jid(std::string_view jid)
    {
        // user@domain/resource; user and domain non-empty, resource optional.
        auto at = jid.find('@');
        if (at == std::string_view::npos || at == 0)
            return false;
        auto slash = jid.find('/', at);
        auto domain_len = (slash == std::string_view::npos ? jid.size() : slash) - at - 1;
        if (domain_len == 0)
            return false;
        if (slash != std::string_view::npos && slash + 1 == jid.size())
            return false;
        return true;
    }

} // namespace

std::optional<TransportAddress> parse_address(std::string_view text)
{
    if (text.size() > kMaxAddressBytes)
        return std::nullopt;
    auto sep = text.find("://");
    if (sep == std::string_view::npos)
        return std::nullopt;
    auto scheme = text.substr(0, sep);
    auto rest = text.substr(sep + 3);
    if (rest.empty())
        return std::nullopt;

    if (scheme == "udp" || scheme == "tcp") {
        auto ep = sim::parse_endpoint(rest);
        if (!ep)
            return std::nullopt;
        return scheme == "udp" ? TransportAddress::udp(*ep) : TransportAddress::tcp(*ep);
    }
    if (scheme == "brunet" || scheme == "subring") {
        auto node = NodeId::try_from_hex(rest);
        if (!node)
            return std::nullopt;
        return scheme == "brunet" ? TransportAddress::brunet(*node)
                                  : TransportAddress::subring(*node);
    }
    if (scheme == "xmpp") {
        if (!valid_jid(rest))
            return std::nullopt;
        return TransportAddress::xmpp(std::string(rest));
    }
    return std::nullopt;
}

} // namespace ringboot::ids
