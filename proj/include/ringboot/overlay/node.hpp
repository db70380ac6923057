#pragma once

#include "ringboot/ids/address.hpp"
#include "ringboot/ids/node_id.hpp"
#include "ringboot/overlay/wire.hpp"
#include "ringboot/sim/network.hpp"

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace ringboot::overlay {

using sim::Time;
using sim::ms;
using sim::seconds;

// Where a node's frames enter and leave the wire. Implemented by the
// path-multiplexed socket; the node never sees path prefixes.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send_to(const sim::Endpoint& dst, std::span<const std::uint8_t> frame) = 0;
    virtual sim::Endpoint local_endpoint() const = 0;
};

enum class LinkState : std::uint8_t { Candidate, Handshaking, Connected, Tunneled, Closed };
enum class WireKind : std::uint8_t { Direct = 0, Tunnel = 1, Relay = 2 };

std::string_view to_string(LinkState s);
std::string_view to_string(WireKind k);

// How frames reach the link's peer. Direct beats tunnel beats relay; an
// upgrade replaces the wire in place, a downgrade never does while the link
// is up.
struct Wire {
    WireKind kind = WireKind::Direct;
    sim::Endpoint direct {};        // Direct
    ids::NodeId forwarder {};       // Tunnel: neighbor that relays for us
    ids::NodeId tunnel_remote {};   // Tunnel: far end; set on inbound wires
    std::uint32_t relay_handle = 0; // Relay: registered external sender
};

struct Link {
    ids::NodeId peer;
    LinkState state = LinkState::Candidate;
    Wire wire;
    sim::Endpoint observed_self {};   // what the peer reports of us; set by handshakes
    sim::Endpoint observed_remote {}; // source endpoint we see their frames from
    Time established_at = 0;
    Time last_recv = 0;
    int missed_pings = 0;
    bool ping_outstanding = false;
    std::uint32_t ping_token = 0;

    bool up() const { return state == LinkState::Connected || state == LinkState::Tunneled; }
};

struct NodeConfig {
    ids::NodeId id;
    int near_k = 2;
    int shortcuts = 0; // reserved knob; small rings need none
    Time stabilize_period = seconds(5);
    Time ping_period = seconds(15);
    int ping_misses = 3;
    Time dial_timeout = seconds(5); // per-attempt handshake timeout
    int dial_retries = 3;
    Time punch_interval = ms(500);
    Time punch_deadline = seconds(10);
    std::uint16_t ttl = 64;
};

// One structured-ring overlay member. All state changes happen on the owning
// simulation's event loop.
class OverlayNode {
public:
    using DialCallback = std::function<void(bool up, const ids::NodeId& peer)>;
    using ProtoHandler
        = std::function<void(const RoutedPacket& packet, const ids::NodeId& via_peer)>;
    using PingCallback = std::function<void(bool ok, Time rtt)>;
    using RelaySender = std::function<void(std::vector<std::uint8_t> frame)>;

    OverlayNode(sim::Network& net, Transport& transport, NodeConfig cfg);

    // --- lifecycle ------------------------------------------------------
    void start();
    void join(std::vector<sim::Endpoint> seeds);
    void leave(); // graceful: close every link, stop timers
    void halt();  // crash-stop: drop all state without telling anyone

    // --- link establishment ----------------------------------------------
    // Dials candidates with the three-way handshake. punch=true uses the
    // simultaneous-open cadence (every probe interval until the deadline);
    // punch=false uses dial_timeout x dial_retries. peer may be zero when the
    // remote id is unknown (seed dial).
    void dial(const ids::NodeId& peer, std::vector<sim::Endpoint> candidates, bool punch,
        DialCallback cb = {});
    // Handshake through a shared neighbor that has direct links to both ends.
    void dial_tunnel(const ids::NodeId& peer, const ids::NodeId& forwarder, DialCallback cb = {});
    // Relay wires are provided by the embedder (subring or federation
    // channel). Frames the peer sends back arrive via on_relay_frame.
    std::uint32_t add_relay_wire(const ids::NodeId& peer, RelaySender send);
    void dial_relay(const ids::NodeId& peer, std::uint32_t handle, DialCallback cb = {});
    void on_relay_frame(std::uint32_t handle, std::span<const std::uint8_t> frame);

    // Routes a ConnectToMe carrying our addresses; the receiver dials back
    // and answers with its own list, so both sides punch simultaneously.
    void connect_to_me(const ids::NodeId& target);

    // --- inbound ----------------------------------------------------------
    void on_datagram(const sim::Datagram& d);

    // --- routing ----------------------------------------------------------
    // Greedy recursive routing. Returns false when dropped at the source.
    bool route(const ids::NodeId& dst, RouteMode mode, Proto proto,
        std::span<const std::uint8_t> payload);
    void set_proto_handler(Proto proto, ProtoHandler h);

    // Application echo over the existing link to peer. cb(false, 0) when the
    // link is missing or the timeout passes.
    void link_ping(const ids::NodeId& peer, PingCallback cb, Time timeout = seconds(3));

    // --- introspection ------------------------------------------------------
    const ids::NodeId& id() const { return cfg_.id; }
    const NodeConfig& config() const { return cfg_; }
    std::vector<ids::NodeId> near_left() const;  // k nearest counter-clockwise
    std::vector<ids::NodeId> near_right() const; // k nearest clockwise
    const std::map<ids::NodeId, Link>& links() const { return links_; }
    const Link* link(const ids::NodeId& peer) const;
    std::optional<sim::Endpoint> reflected() const { return reflected_; }
    // For reflection learned out of band (the socket is shared, so the
    // mapping applies to this node's traffic too).
    void set_reflected(const sim::Endpoint& e) { reflected_ = e; }
    // Reflected endpoint first, local second, overlay-relay last.
    std::vector<ids::TransportAddress> advertised_addresses() const;
    std::vector<std::string> advertised_address_strings() const;

    struct Stats {
        std::uint64_t forwarded = 0;
        std::uint64_t delivered = 0;
        std::uint64_t exact_misses = 0;
        std::uint64_t ttl_drops = 0;
        std::uint64_t no_route_drops = 0;
        std::uint64_t malformed = 0;
        std::uint64_t tunnel_forwards = 0;
    };
    const Stats& stats() const { return stats_; }

    // --- events -------------------------------------------------------------
    std::function<void(const ids::NodeId&, const Link&)> on_link_up;
    std::function<void(const ids::NodeId&)> on_link_down;
    std::function<void(const sim::Endpoint&)> on_reflected;

private:
    struct Dial {
        std::uint32_t token = 0;
        ids::NodeId peer; // zero = unknown
        std::vector<sim::Endpoint> candidates;
        Wire wire;                  // non-direct dials carry their wire here
        bool punch = false;
        int attempts_left = 0;      // non-punch dials
        Time deadline = 0;          // punch dials
        std::uint64_t timer = 0;
        std::vector<DialCallback> callbacks;
    };

    struct InboundSession {
        ids::NodeId initiator;
        Wire wire;
        Time started_at = 0;
    };

    struct CandidateInfo {
        std::vector<sim::Endpoint> endpoints;
        Time last_seen = 0;
    };

    struct PendingAppPing {
        PingCallback cb;
        Time sent_at = 0;
        std::uint64_t timer = 0;
    };

    // frame handling
    void handle_frame(const Frame& f, const Wire& from, const sim::Endpoint& wire_src);
    void handle_handshake_req(const HandshakeReq& m, const Wire& from, const sim::Endpoint& src);
    void handle_handshake_reply(const HandshakeReply& m, const Wire& from, const sim::Endpoint& src);
    void handle_handshake_ack(const HandshakeAck& m, const Wire& from, const sim::Endpoint& src);
    void handle_routed(RoutedPacket p, const ids::NodeId& via);
    void handle_peers_req(const PeersReq& m, const Wire& from);
    void handle_peers_reply(const PeersReply& m);
    void handle_ctm(const RoutedPacket& p);
    void handle_tunnel(const TunnelFrame& t, const sim::Endpoint& wire_src);
    ids::NodeId peer_for_wire(const Wire& w) const;

    // link plumbing
    Link& adopt_link(const ids::NodeId& peer, const Wire& wire, LinkState state);
    void set_link_up(const ids::NodeId& peer, const Wire& wire, const sim::Endpoint& observed_self);
    void close_link(const ids::NodeId& peer, bool send_close);
    void touch_link(const ids::NodeId& peer);
    void send_on_wire(const Wire& wire, const ids::NodeId& peer,
        const std::vector<std::uint8_t>& frame);
    void send_to_link(const Link& l, const Frame& f);
    void learn_reflection(const sim::Endpoint& observed);
    ids::NodeId peer_by_endpoint(const sim::Endpoint& e) const;

    // dialing
    void start_dial(Dial d);
    void dial_attempt(std::uint32_t token);
    void finish_dial(std::uint32_t token, bool up, const ids::NodeId& peer);
    Dial* dial_to(const ids::NodeId& peer);

    // maintenance
    void stabilize();
    void ping_round();
    void learn_candidate(const ids::NodeId& peer, const std::vector<std::string>& addresses);
    std::vector<ids::NodeId> desired_near() const;
    std::vector<ids::NodeId> nearest_per_side(const std::vector<ids::NodeId>& pool, int k,
        bool right) const;

    // routing
    const Link* next_hop(const ids::NodeId& dst, const ids::NodeId* exclude) const;
    void forward_or_deliver(RoutedPacket p, bool local_origin);
    void deliver_local(RoutedPacket p);
    std::uint32_t next_token();

    sim::Network& net_;
    Transport& transport_;
    NodeConfig cfg_;
    bool running_ = false;
    bool stopped_ = false; // left or halted; inbound frames are ignored
    std::uint64_t stabilize_timer_ = 0;
    std::uint64_t ping_timer_ = 0;

    std::map<ids::NodeId, Link> links_;
    std::map<sim::Endpoint, ids::NodeId> by_endpoint_;
    std::map<std::uint32_t, Dial> dials_;
    std::map<std::uint32_t, InboundSession> inbound_;
    std::map<std::uint32_t, std::pair<ids::NodeId, RelaySender>> relay_wires_;
    std::map<ids::NodeId, CandidateInfo> candidates_;
    std::map<std::uint32_t, PendingAppPing> app_pings_;
    std::map<Proto, ProtoHandler> handlers_;
    std::vector<sim::Endpoint> seeds_;
    std::optional<sim::Endpoint> reflected_;
    Stats stats_;
    std::uint32_t next_relay_handle_ = 1;
};

} // namespace ringboot::overlay
