#pragma once

#include "ringboot/ids/address.hpp"
#include "ringboot/overlay/wire.hpp" // encode_address_list, the record value format

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ringboot::rendezvous {

// One peer as a rendezvous service reports it: a stable identity string plus
// the transport addresses it published. The identity doubles as the relay
// address a provider can deliver channel frames to.
struct PeerRecord {
    std::string identity;
    std::vector<std::string> addresses;
};

// A way to find the other members of one private ring and exchange small
// control frames with them before any private link exists. Implementations
// differ only in where the records live; callers never branch on which one
// they hold.
class RendezvousProvider {
public:
    using QueryCallback
        = std::function<void(std::vector<PeerRecord> peers, bool definitive)>;
    using ChannelHandler
        = std::function<void(const ids::NodeId& src_priv, std::span<const std::uint8_t> payload)>;

    virtual ~RendezvousProvider() = default;

    // Publishes this peer's addresses under the ring's namespace key and
    // keeps them published until withdraw. Repeating with the same list is
    // a no-op; a new list replaces the old one.
    virtual void announce(const ids::NodeId& ns, std::vector<std::string> addresses) = 0;
    virtual void withdraw() = 0;

    // Asks for the current members. The callback fires once; definitive
    // means the service answered, even with an empty list.
    virtual void query(const ids::NodeId& ns, QueryCallback cb) = 0;

    // The list as last published, with this provider's own relay identity
    // appended. Empty before the first announce.
    virtual const std::vector<std::string>& announced() const = 0;

    // Requests addresses from known members the service itself cannot push.
    // At most one round per 10 seconds, at most 10 peers per round. Services
    // whose records already carry addresses ignore this.
    virtual void request_addresses() {}

    // Sends one control frame to the peer behind a relay address from a
    // PeerRecord. Returns false when the address is not one this provider
    // can deliver to.
    virtual bool channel_send(const std::string& relay_address,
        std::span<const std::uint8_t> payload)
        = 0;

    // Creates (or finds) a relay wire on the private node toward peer_priv,
    // carried over this provider's transport. Returns the wire handle.
    virtual std::uint32_t relay_wire(const std::string& relay_address,
        const ids::NodeId& peer_priv)
        = 0;

    // Fires once per newly known peer whose addresses became available.
    std::function<void(const PeerRecord&)> on_peer_discovered;
    // Control frames from other members, in arrival order.
    ChannelHandler on_channel;
};

} // namespace ringboot::rendezvous
