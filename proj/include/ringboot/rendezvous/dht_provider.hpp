#pragma once

#include "ringboot/dht/dht.hpp"
#include "ringboot/rendezvous/provider.hpp"
#include "ringboot/transport/subring.hpp"

#include <set>

namespace ringboot::rendezvous {

// Rendezvous over the public ring's storage. Records are leased address
// lists under the namespace key, refreshed while announced; the control
// channel and relay wires ride subring frames through the hub. The provider
// owns the hub attachment for its namespace.
class DhtProvider : public RendezvousProvider {
public:
    static constexpr std::uint32_t kAnnounceTtlS = 60;

    DhtProvider(dht::DhtNode& dht, transport::SubringHub& hub,
        overlay::OverlayNode& private_node);
    ~DhtProvider() override;

    void announce(const ids::NodeId& ns, std::vector<std::string> addresses) override;
    void withdraw() override;
    void query(const ids::NodeId& ns, QueryCallback cb) override;
    const std::vector<std::string>& announced() const override { return announced_; }
    bool channel_send(const std::string& relay_address,
        std::span<const std::uint8_t> payload) override;
    std::uint32_t relay_wire(const std::string& relay_address,
        const ids::NodeId& peer_priv) override;

    const std::string& identity() const { return identity_; }

private:
    dht::DhtNode& dht_;
    transport::SubringHub& hub_;
    overlay::OverlayNode& priv_;
    std::string identity_;
    std::optional<ids::NodeId> ns_;
    std::vector<std::string> announced_;
    std::uint32_t maintain_ = 0;
    std::set<std::string> discovered_;
};

} // namespace ringboot::rendezvous
