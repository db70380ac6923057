#pragma once

#include "ringboot/ids/node_id.hpp"
#include "ringboot/sim/endpoint.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace ringboot::ids {

enum class AddressScheme { Udp, Tcp, Brunet, Subring, Xmpp };

std::string_view to_string(AddressScheme s);

// One entry of a candidate list. Canonical text forms:
//   udp://1.2.3.4:5678
//   tcp://1.2.3.4:5678
//   brunet://<40 hex>            (overlay hop; port never printed)
//   subring://<40 hex>
//   xmpp://user@domain/resource
// The whole xmpp form is capped at 1023 bytes.
struct TransportAddress {
    AddressScheme scheme;
    sim::Endpoint endpoint {}; // udp and tcp
    NodeId node;               // brunet and subring
    std::string jid;           // xmpp user@domain/resource

    std::string to_string() const;
    bool operator==(const TransportAddress&) const = default;

    static TransportAddress udp(const sim::Endpoint& e);
    static TransportAddress tcp(const sim::Endpoint& e);
    static TransportAddress brunet(const NodeId& n);
    static TransportAddress subring(const NodeId& n);
    static TransportAddress xmpp(std::string jid);
};

// Returns nullopt for anything that does not round-trip to canonical form.
std::optional<TransportAddress> parse_address(std::string_view text);

constexpr std::size_t kMaxAddressBytes = 1023;

} // namespace ringboot::ids
