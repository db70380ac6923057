#pragma once

#include "ringboot/ids/address.hpp"
#include "ringboot/overlay/node.hpp"
#include "ringboot/sim/network.hpp"

#include <map>
#include <vector>

namespace ringboot::transport {

using sim::Time;
using sim::ms;
using sim::seconds;

// Frame of a private ring carried inside the public ring. An all-zero dst
// addresses the ring's control channel instead of a node, which is how peers
// talk before any private link exists.
struct SubringFrame {
    ids::NodeId ns;  // namespace key naming the private ring
    ids::NodeId src; // sender's private id
    ids::NodeId dst; // receiver's private id, or all-zero
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_subring(const SubringFrame& f);
std::optional<SubringFrame> decode_subring(std::span<const std::uint8_t> data);

// Portless address a peer publishes so others can reach its private node
// through its public one.
ids::TransportAddress subring_address(const ids::NodeId& public_id);

// Carries private-ring frames across the public ring. Outbound frames ride
// exact-routed packets to the peer's public node; inbound frames feed the
// attached private node's relay wires. Both ends create their wire from the
// rendezvous exchange, which is where the public ids come from.
class SubringHub {
public:
    using ChannelHandler
        = std::function<void(const ids::NodeId& src_priv, std::span<const std::uint8_t> payload)>;

    static constexpr Time kQueueTimeout = seconds(10);
    static constexpr Time kQueuePoll = ms(250);

    SubringHub(sim::Network& net, overlay::OverlayNode& public_node);
    ~SubringHub();

    SubringHub(const SubringHub&) = delete;
    SubringHub& operator=(const SubringHub&) = delete;

    // Duplicate namespace is a usage error and throws.
    void attach(const ids::NodeId& ns, overlay::OverlayNode& private_node);
    void detach(const ids::NodeId& ns);

    void set_channel_handler(const ids::NodeId& ns, ChannelHandler h);
    bool send_channel(const ids::NodeId& ns, const ids::NodeId& dst_pub,
        std::span<const std::uint8_t> payload);

    // Relay wire on the attached node toward one remote private node;
    // repeated calls return the same handle.
    std::uint32_t wire_to(const ids::NodeId& ns, const ids::NodeId& dst_pub,
        const ids::NodeId& dst_priv);

    struct Stats {
        std::uint64_t sent = 0;
        std::uint64_t delivered = 0;
        std::uint64_t malformed_drops = 0;
        std::uint64_t namespace_drops = 0; // no ring attached under that key
        std::uint64_t wire_drops = 0;      // wrong dst, unknown sender, or no channel
        std::uint64_t route_misses = 0;    // refused at the source
        std::uint64_t queued = 0;          // waiting for the public node to join
        std::uint64_t queue_drops = 0;     // waited too long
    };
    const Stats& stats() const { return stats_; }

    bool public_joined() const;
    overlay::OverlayNode& public_node() { return pub_; }

private:
    struct Attached {
        overlay::OverlayNode* node = nullptr;
        ChannelHandler channel;
        std::map<ids::NodeId, std::uint32_t> wires;     // peer priv id -> relay handle
        std::map<ids::NodeId, ids::NodeId> peer_public; // peer priv id -> public id
    };
    struct QueuedFrame {
        ids::NodeId dst_pub;
        std::vector<std::uint8_t> packet;
        Time deadline = 0;
    };

    Attached& ring_at(const ids::NodeId& ns);
    void handle_packet(const overlay::RoutedPacket& p);
    bool dispatch(const ids::NodeId& dst_pub, std::vector<std::uint8_t> packet);
    void arm_queue_timer();
    void flush_queue();

    sim::Network& net_;
    overlay::OverlayNode& pub_;
    std::map<ids::NodeId, Attached> rings_;
    std::vector<QueuedFrame> queue_;
    std::uint64_t queue_timer_ = 0;
    bool timer_armed_ = false;
    Stats stats_;
};

} // namespace ringboot::transport
