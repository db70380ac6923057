#pragma once

#include "ringboot/sim/endpoint.hpp"
#include "ringboot/sim/nat.hpp"
#include "ringboot/sim/time.hpp"
#include "ringboot/sim/trace.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <span>
#include <string_view>
#include <vector>

namespace ringboot::sim {

using HostId = std::uint32_t;
using NatId = std::uint32_t;

constexpr std::size_t kMaxDatagram = 65507;

struct Datagram {
    Endpoint src;               // as visible to the receiver
    Endpoint dst;               // local endpoint it was delivered to
    std::vector<std::uint8_t> payload;
};

using DatagramHandler = std::function<void(const Datagram&)>;

struct HostStats {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0; // frames received by this host
    std::uint64_t dropped = 0;   // frames this host sent that were dropped
};

struct NetworkConfig {
    std::uint64_t seed = 1;
    Time base_latency = ms(25);   // same site
    Time cross_latency = ms(100); // different sites
    Time lan_latency = ms(1);     // behind the same NAT device
    Time mapping_ttl = seconds(60);
    double loss_probability = 0.0; // seeded, applied per frame
    Time jitter_max = 0;           // seeded uniform [0, jitter_max) per frame
};

// Deterministic discrete-event datagram network. Virtual time never runs
// backwards; events with equal time fire in insertion order; the same seed
// and call sequence reproduce the same trace byte for byte.
class Network {
public:
    explicit Network(NetworkConfig cfg = {});

    // --- topology -----------------------------------------------------
    HostId create_host(int site = 0); // public address
    HostId create_host(NatType nat, std::optional<NatId> shared_nat = std::nullopt, int site = 0);
    NatId create_nat(NatType type, int site = 0);

    NatDevice& nat(NatId id);
    const NatDevice& nat(NatId id) const;
    std::optional<NatId> host_nat(HostId h) const;
    std::uint32_t host_ip(HostId h) const;
    std::size_t host_count() const { return hosts_.size(); }
    std::vector<NatId> nat_ids() const;
    void set_link_latency(HostId a, HostId b, Time one_way);

    // --- sockets ------------------------------------------------------
    void bind(HostId h, std::uint16_t port, DatagramHandler handler);
    void unbind(HostId h, std::uint16_t port);
    std::uint16_t alloc_port(HostId h) const; // lowest unbound >= 40000
    bool is_bound(HostId h, std::uint16_t port) const;

    // Sends one datagram. Outbound NAT translation happens now; inbound
    // filtering happens at arrival. Throws std::invalid_argument for unbound
    // source port or oversize payload; unroutable destinations are counted
    // drops.
    void send(HostId h, std::uint16_t src_port, const Endpoint& dst,
        std::span<const std::uint8_t> payload);

    // --- timers and the clock ------------------------------------------
    std::uint64_t schedule_at(Time t, std::function<void()> fn);
    std::uint64_t schedule_after(Time delay, std::function<void()> fn);
    void cancel_timer(std::uint64_t id);

    // Runs every event with time <= t in order and sets the clock to t.
    std::size_t run_until(Time t);
    Time now() const { return now_; }

    std::mt19937_64& rng() { return rng_; }
    TraceLog& trace() { return trace_; }
    const NetworkConfig& config() const { return cfg_; }

    // --- statistics ----------------------------------------------------
    const HostStats& stats(HostId h) const;
    std::uint64_t total_sent() const { return total_sent_; }
    std::uint64_t total_delivered() const { return total_delivered_; }
    std::uint64_t total_dropped() const { return total_dropped_; }
    std::uint64_t pending_frames() const { return pending_frames_; }

private:
    struct Host {
        std::uint32_t ip;
        std::optional<NatId> nat;
        int site;
        std::map<std::uint16_t, DatagramHandler> bound;
        HostStats stats;
    };

    struct Event {
        Time at;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const
        {
            if (a.at != b.at)
                return a.at > b.at;
            return a.seq > b.seq;
        }
    };

    enum class Route { ToPublicHost, ToNatExternal, Lan, Hairpin, Unroutable };

    std::uint32_t next_public_ip();
    Time latency_between(HostId src, HostId dst) const;
    int site_of(HostId h) const;
    std::optional<HostId> public_host_by_ip(std::uint32_t ip) const;
    std::optional<NatId> nat_by_external_ip(std::uint32_t ip) const;
    std::optional<HostId> host_by_private_ip(NatId nat, std::uint32_t ip) const;
    void deliver(HostId dst_host, const Endpoint& wire_src, const Endpoint& dst_ep,
        std::vector<std::uint8_t> payload, HostId origin);
    void drop(const Endpoint& wire_src, const Endpoint& dst, std::size_t bytes,
        std::string_view verdict, HostId origin);

    NetworkConfig cfg_;
    Time now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
    std::vector<Host> hosts_;
    std::vector<NatDevice> nats_;
    std::map<std::uint32_t, HostId> public_ip_to_host_;
    std::map<std::uint32_t, NatId> external_ip_to_nat_;
    std::map<NatId, std::map<std::uint32_t, HostId>> private_ip_to_host_;
    std::map<std::pair<HostId, HostId>, Time> latency_overrides_;
    std::set<std::uint64_t> cancelled_timers_;
    std::mt19937_64 rng_;
    TraceLog trace_;
    std::uint32_t next_public_octets_ = 0; // index into the public block
    std::uint64_t total_sent_ = 0, total_delivered_ = 0, total_dropped_ = 0;
    std::uint64_t pending_frames_ = 0;
};

} // namespace ringboot::sim
