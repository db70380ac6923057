#pragma once

#include "ringboot/overlay/node.hpp"
#include "ringboot/rendezvous/federation.hpp"
#include "ringboot/rendezvous/provider.hpp"

#include <map>
#include <set>

namespace ringboot::rendezvous {

// Rendezvous over federated presence. Ring membership is announced by
// binding a resource that starts with the namespace digest; peers recognize
// each other by that prefix across the roster. Addresses travel in queries
// answered peer to peer, and the control channel plus relay wires ride
// encapsulated ring frames inside queries too. The provider owns the
// client's event handlers for its lifetime.
class PresenceProvider : public RendezvousProvider {
public:
    static constexpr Time kRequestWindow = seconds(10);
    static constexpr std::size_t kRequestFanout = 10;

    // Channel payloads whose first byte is one of these are the provider's
    // own; everything else reaches on_channel untouched.
    static constexpr std::uint8_t kAddrRequest = 0x01;
    static constexpr std::uint8_t kAddrReply = 0x02;

    PresenceProvider(sim::Network& net, FederationClient& client,
        overlay::OverlayNode& private_node);
    ~PresenceProvider() override;

    void announce(const ids::NodeId& ns, std::vector<std::string> addresses) override;
    void withdraw() override;
    void query(const ids::NodeId& ns, QueryCallback cb) override;
    const std::vector<std::string>& announced() const override { return announced_; }
    void request_addresses() override;
    bool channel_send(const std::string& relay_address,
        std::span<const std::uint8_t> payload) override;
    std::uint32_t relay_wire(const std::string& relay_address,
        const ids::NodeId& peer_priv) override;

    std::string identity() const;
    const std::string& resource() const { return resource_; }

    struct Stats {
        std::uint64_t requests_sent = 0;
        std::uint64_t replies_sent = 0;
        std::uint64_t iq_drops = 0; // malformed, foreign ring, unknown wire
        std::uint64_t iq_errors = 0;
    };
    const Stats& stats() const { return stats_; }

private:
    struct Peer {
        std::vector<std::string> addresses;
    };

    bool matches(std::string_view full_jid) const;
    void on_presence(const std::string& from, bool online);
    void on_iq(const std::string& from, std::span<const std::uint8_t> payload);
    void send_frame(const std::string& to_full, const ids::NodeId& dst_priv,
        std::span<const std::uint8_t> payload);

    sim::Network& net_;
    FederationClient& client_;
    overlay::OverlayNode& priv_;
    std::string nonce_; // 16 hex chars, fixed per provider instance
    std::string resource_;
    std::optional<ids::NodeId> ns_;
    std::string ns_hex_;
    std::vector<std::string> announced_;
    std::map<std::string, Peer> peers_; // online matching full jid -> state
    std::map<ids::NodeId, std::uint32_t> wires_; // peer priv id -> relay handle
    std::map<ids::NodeId, std::string> wire_jids_; // peer priv id -> full jid
    std::set<std::string> discovered_;
    Time last_round_ = -kRequestWindow;
    Stats stats_;
};

} // namespace ringboot::rendezvous
