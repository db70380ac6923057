#pragma once

#include "ringboot/overlay/node.hpp"
#include "ringboot/rendezvous/provider.hpp"
#include "ringboot/sim/network.hpp"
#include "ringboot/transport/path_demux.hpp"

#include <array>
#include <map>
#include <memory>
#include <optional>

namespace ringboot::bootstrap {

using sim::Time;
using sim::ms;
using sim::seconds;

// The milestones of bringing one peer into its private ring, in order. The
// current phase may fall back under churn; the timestamps record first
// attainment only.
enum class Phase : std::uint8_t {
    Starting = 0,
    Reflected = 1,
    Rendezvoused = 2,
    Relaying = 3,
    Connected = 4,
};
std::string_view to_string(Phase p);

enum class LinkOutcome : std::uint8_t { None, Direct, Tunneled, Relayed };
std::string_view to_string(LinkOutcome o);

// How a session learns its socket's publicly visible endpoint. The callback
// fires once per invocation; nullopt means this attempt failed.
using Reflector = std::function<void(std::function<void(std::optional<sim::Endpoint>)>)>;

// Passive reflection: poll the public node, which learns its mapping from
// link handshakes. Fires only once the mapping is known.
Reflector overlay_reflector(sim::Network& net, overlay::OverlayNode& public_node);
// Active reflection against a reflector service, riding the shared socket.
Reflector stun_reflector(sim::Network& net, transport::PathDemux& mux, sim::Endpoint service);

// Candidate exchange over the provider channel. The lower private id offers;
// the answer completes the exchange and both sides punch. The address list is
// the sender's full published list, so the receiver can reach back through
// the relay before its own query has answered.
constexpr std::uint8_t kHelloOffer = 0x10;
constexpr std::uint8_t kHelloAnswer = 0x11;

struct ChannelHello {
    bool is_answer = false;
    ids::NodeId id;
    std::vector<std::string> addresses;
};
std::vector<std::uint8_t> encode_hello(const ChannelHello& h);
std::optional<ChannelHello> decode_hello(std::span<const std::uint8_t> data);

struct SessionConfig {
    ids::NodeId ns;
    Time tick = seconds(5);        // query + connectivity cadence
    Time offer_retry = seconds(3); // one retry per epoch before the next tick
    Time ping_timeout = seconds(3);
};

// One discovered member of the ring and how the link to it stands.
struct PeerState {
    ids::NodeId id;
    std::string relay_address;
    std::vector<std::string> addresses;
    LinkOutcome outcome = LinkOutcome::None;
    bool exchanged = false;      // hello round trip done in either role
    bool punched = false;        // punch attempt concluded (either way)
    bool punch_inflight = false;
    bool direct = false;

    bool offer_pending = false;
    Time offered_at = 0;
    std::uint64_t offer_timer = 0;
    std::uint32_t wire = 0; // relay wire handle from the provider
};

// Drives one peer from a bare private node to membership in the ring:
// reflection, announce + discovery, candidate exchange over the provider
// relay, simultaneous-open punching with relay fallback, and the recurring
// all-to-all connectivity check.
class BootstrapSession {
public:
    BootstrapSession(sim::Network& net, overlay::OverlayNode& private_node,
        rendezvous::RendezvousProvider& provider, Reflector reflector, SessionConfig cfg);
    ~BootstrapSession();

    BootstrapSession(const BootstrapSession&) = delete;
    BootstrapSession& operator=(const BootstrapSession&) = delete;

    void start();
    void stop();

    Phase phase() const { return phase_; }
    std::optional<Time> phase_time(Phase p) const { return stamped_[std::size_t(p)]; }
    std::optional<sim::Endpoint> reflected() const { return reflected_; }
    const std::map<ids::NodeId, PeerState>& peers() const { return peers_; }
    // Every discovered peer answered the last ping round (and one exists).
    bool all_to_all() const { return all_to_all_; }
    // Duration of the first hello round trip over the provider relay.
    std::optional<Time> first_relay_rtt() const { return first_relay_rtt_; }

    std::function<void(Phase, Time)> on_phase; // first attainments only

private:
    void stamp(Phase p);
    void run_reflector();
    void on_reflect(std::optional<sim::Endpoint> e);
    void tick();
    void on_query(std::vector<rendezvous::PeerRecord> records, bool definitive);
    void upsert(const std::string& identity, const std::vector<std::string>& addresses);
    void pursue(PeerState& p);
    void send_offer(PeerState& p);
    void on_channel(const ids::NodeId& src, std::span<const std::uint8_t> payload);
    void punch(PeerState& p);
    void punch_concluded(const ids::NodeId& id);
    void refresh_outcome(PeerState& p);
    void check_connectivity();

    sim::Network& net_;
    overlay::OverlayNode& priv_;
    rendezvous::RendezvousProvider& provider_;
    Reflector reflector_;
    SessionConfig cfg_;

    Phase phase_ = Phase::Starting;
    std::array<std::optional<Time>, 5> stamped_;
    std::optional<sim::Endpoint> reflected_;
    std::map<ids::NodeId, PeerState> peers_;
    bool all_to_all_ = false;
    std::optional<Time> first_relay_rtt_;

    bool running_ = false;
    bool query_open_ = false;
    bool round_open_ = false;
    std::uint64_t tick_timer_ = 0;
    std::shared_ptr<bool> alive_; // guards callbacks that outlive stop()
};

} // namespace ringboot::bootstrap
