#include "ringboot/bootstrap/session.hpp"

#include "ringboot/bytes.hpp"
#include "ringboot/rendezvous/stun.hpp"

#include <algorithm>
#include <set>

namespace ringboot::bootstrap {

namespace {

    std::vector<sim::Endpoint> udp_candidates(const std::vector<std::string>& addresses)
    {
        std::vector<sim::Endpoint> out;
        for (const auto& a : addresses) {
            auto parsed = ids::parse_address(a);
            if (parsed && parsed->scheme == ids::AddressScheme::Udp)
                out.push_back(parsed->endpoint);
        }
        return out;
    }

    std::optional<std::string> relay_identity(const std::vector<std::string>& addresses)
    {
        for (const auto& a : addresses) {
            auto parsed = ids::parse_address(a);
            if (parsed
                && (parsed->scheme == ids::AddressScheme::Subring
                    || parsed->scheme == ids::AddressScheme::Xmpp))
                return a;
        }
        return std::nullopt;
    }

    std::optional<ids::NodeId> private_id_of(const std::vector<std::string>& addresses)
    {
        for (const auto& a : addresses) {
            auto parsed = ids::parse_address(a);
            if (parsed && parsed->scheme == ids::AddressScheme::Brunet)
                return parsed->node;
        }
        return std::nullopt;
    }

} // namespace

std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::Starting:
        return "starting";
    case Phase::Reflected:
        return "reflected";
    case Phase::Rendezvoused:
        return "rendezvoused";
    case Phase::Relaying:
        return "relaying";
    case Phase::Connected:
        return "connected";
    }
    return "?";
}

std::string_view to_string(LinkOutcome o)
{
    switch (o) {
    case LinkOutcome::None:
        return "none";
    case LinkOutcome::Direct:
        return "direct";
    case LinkOutcome::Tunneled:
        return "tunneled";
    case LinkOutcome::Relayed:
        return "relayed";
    }
    return "?";
}

std::vector<std::uint8_t> encode_hello(const ChannelHello& h)
{
    ByteWriter w;
    w.u8(h.is_answer ? kHelloAnswer : kHelloOffer);
    w.bytes(h.id.bytes());
    w.bytes(overlay::encode_address_list(h.addresses));
    return w.take();
}

std::optional<ChannelHello> decode_hello(std::span<const std::uint8_t> data)
{
    ByteReader r(data);
    auto kind = r.u8();
    if (!r.ok() || (kind != kHelloOffer && kind != kHelloAnswer))
        return std::nullopt;
    ids::NodeId::Bytes b;
    if (!r.bytes(b.data(), b.size()))
        return std::nullopt;
    auto addresses = overlay::decode_address_list(r.rest());
    if (!addresses)
        return std::nullopt;
    ChannelHello h;
    h.is_answer = kind == kHelloAnswer;
    h.id = ids::NodeId { b };
    h.addresses = std::move(*addresses);
    return h;
}

namespace {

    void poll_reflected(sim::Network& net, overlay::OverlayNode& node,
        std::function<void(std::optional<sim::Endpoint>)> cb)
    {
        if (auto e = node.reflected()) {
            cb(e);
            return;
        }
        net.schedule_after(ms(250), [&net, &node, cb = std::move(cb)]() mutable {
            poll_reflected(net, node, std::move(cb));
        });
    }

} // namespace

Reflector overlay_reflector(sim::Network& net, overlay::OverlayNode& public_node)
{
    return [&net, &public_node](std::function<void(std::optional<sim::Endpoint>)> cb) {
        poll_reflected(net, public_node, std::move(cb));
    };
}

Reflector stun_reflector(sim::Network& net, transport::PathDemux& mux, sim::Endpoint service)
{
    auto client = std::make_shared<rendezvous::StunClient>(net, mux);
    return [client, service](std::function<void(std::optional<sim::Endpoint>)> cb) {
        client->bind(service, std::move(cb));
    };
}

BootstrapSession::BootstrapSession(sim::Network& net, overlay::OverlayNode& private_node,
    rendezvous::RendezvousProvider& provider, Reflector reflector, SessionConfig cfg)
    : net_(net)
    , priv_(private_node)
    , provider_(provider)
    , reflector_(std::move(reflector))
    , cfg_(cfg)
    , alive_(std::make_shared<bool>(true))
{
    provider_.on_channel
        = [this](const ids::NodeId& src, std::span<const std::uint8_t> payload) {
              if (running_)
                  on_channel(src, payload);
          };
    provider_.on_peer_discovered = [this](const rendezvous::PeerRecord& rec) {
        if (!running_ || !reflected_)
            return;
        stamp(Phase::Rendezvoused);
        upsert(rec.identity, rec.addresses);
    };
}

BootstrapSession::~BootstrapSession()
{
    stop();
    *alive_ = false;
    provider_.on_channel = nullptr;
    provider_.on_peer_discovered = nullptr;
}

void BootstrapSession::start()
{
    if (running_)
        return;
    running_ = true;
    stamp(Phase::Starting);
    priv_.start();
    run_reflector();
}

void BootstrapSession::stop()
{
    if (!running_)
        return;
    running_ = false;
    net_.cancel_timer(tick_timer_);
    for (auto& [id, p] : peers_)
        if (p.offer_timer)
            net_.cancel_timer(p.offer_timer);
}

void BootstrapSession::stamp(Phase p)
{
    if (int(p) > int(phase_))
        phase_ = p;
    auto& slot = stamped_[std::size_t(p)];
    if (slot)
        return;
    slot = net_.now();
    net_.trace().record(net_.now(), "phase", priv_.id().to_hex(), to_string(p), 0, "ok");
    if (on_phase)
        on_phase(p, *slot);
}

void BootstrapSession::run_reflector()
{
    reflector_([this, alive = alive_](std::optional<sim::Endpoint> e) {
        if (!*alive || !running_)
            return;
        on_reflect(e);
    });
}

void BootstrapSession::on_reflect(std::optional<sim::Endpoint> e)
{
    if (reflected_)
        return;
    if (!e) {
        net_.schedule_after(cfg_.tick, [this, alive = alive_] {
            if (*alive && running_ && !reflected_)
                run_reflector();
        });
        return;
    }
    reflected_ = *e;
    priv_.set_reflected(*e);
    stamp(Phase::Reflected);
    provider_.announce(cfg_.ns, priv_.advertised_address_strings());
    tick();
}

void BootstrapSession::tick()
{
    if (!running_)
        return;
    tick_timer_ = net_.schedule_after(cfg_.tick, [this, alive = alive_] {
        if (*alive)
            tick();
    });
    if (!query_open_) {
        query_open_ = true;
        provider_.query(cfg_.ns,
            [this, alive = alive_](std::vector<rendezvous::PeerRecord> records, bool definitive) {
                if (!*alive || !running_)
                    return;
                on_query(std::move(records), definitive);
            });
    }
    if (!all_to_all_)
        provider_.request_addresses();
    for (auto& [id, p] : peers_)
        if (!p.exchanged && priv_.id() < id && !p.offer_pending)
            send_offer(p);
    check_connectivity();
}

void BootstrapSession::on_query(std::vector<rendezvous::PeerRecord> records, bool definitive)
{
    query_open_ = false;
    if (!definitive)
        return;
    stamp(Phase::Rendezvoused);
    std::set<ids::NodeId> seen;
    for (const auto& rec : records) {
        if (auto pid = private_id_of(rec.addresses))
            seen.insert(*pid);
        upsert(rec.identity, rec.addresses);
    }
    // A peer can drop out of the record set before its links die; only a
    // peer that is both unlisted and unreachable is truly gone.
    for (auto it = peers_.begin(); it != peers_.end();) {
        auto l = priv_.links().find(it->first);
        bool up = l != priv_.links().end() && l->second.up();
        if (!seen.contains(it->first) && !up) {
            if (it->second.offer_timer)
                net_.cancel_timer(it->second.offer_timer);
            it = peers_.erase(it);
        } else {
            ++it;
        }
    }
}

void BootstrapSession::upsert(const std::string& identity, const std::vector<std::string>& addresses)
{
    auto pid = private_id_of(addresses);
    if (!pid || *pid == priv_.id())
        return;
    auto [it, inserted] = peers_.try_emplace(*pid);
    PeerState& p = it->second;
    p.relay_address = identity;
    if (inserted) {
        p.id = *pid;
        p.addresses = addresses;
        pursue(p);
        return;
    }
    if (p.addresses != addresses) {
        p.addresses = addresses;
        p.punched = false;
        p.direct = false;
        pursue(p);
    }
}

void BootstrapSession::pursue(PeerState& p)
{
    p.wire = provider_.relay_wire(p.relay_address, p.id);
    if (!p.exchanged) {
        if (priv_.id() < p.id)
            send_offer(p);
        return;
    }
    if (!p.punched && !p.punch_inflight)
        punch(p);
}

void BootstrapSession::send_offer(PeerState& p)
{
    if (p.offer_pending)
        return;
    ChannelHello hello { false, priv_.id(), provider_.announced() };
    if (!provider_.channel_send(p.relay_address, encode_hello(hello)))
        return; // unroutable right now; the next tick retries
    p.offer_pending = true;
    if (!p.offered_at)
        p.offered_at = net_.now();
    const ids::NodeId id = p.id;
    p.offer_timer = net_.schedule_after(cfg_.offer_retry, [this, alive = alive_, id] {
        if (!*alive || !running_)
            return;
        auto it = peers_.find(id);
        if (it == peers_.end() || it->second.exchanged)
            return;
        ChannelHello again { false, priv_.id(), provider_.announced() };
        provider_.channel_send(it->second.relay_address, encode_hello(again));
        it->second.offer_pending = false; // the tick cadence takes over
        it->second.offer_timer = 0;
    });
}

void BootstrapSession::on_channel(const ids::NodeId& src, std::span<const std::uint8_t> payload)
{
    if (!reflected_)
        return;
    auto hello = decode_hello(payload);
    if (!hello || !(hello->id == src) || hello->id == priv_.id())
        return;
    auto identity = relay_identity(hello->addresses);
    if (!identity)
        return;
    stamp(Phase::Rendezvoused);
    auto [it, inserted] = peers_.try_emplace(hello->id);
    PeerState& p = it->second;
    bool addr_changed = !inserted && p.addresses != hello->addresses;
    if (inserted)
        p.id = hello->id;
    p.relay_address = *identity;
    p.addresses = hello->addresses;
    p.wire = provider_.relay_wire(p.relay_address, p.id);

    if (!hello->is_answer) {
        ChannelHello answer { true, priv_.id(), provider_.announced() };
        provider_.channel_send(p.relay_address, encode_hello(answer));
        if (!p.exchanged) {
            p.exchanged = true;
            stamp(Phase::Relaying);
            punch(p);
        } else if (addr_changed) {
            p.punched = false;
            if (!p.punch_inflight)
                punch(p);
        }
        return;
    }
    if (p.offer_timer) {
        net_.cancel_timer(p.offer_timer);
        p.offer_timer = 0;
    }
    p.offer_pending = false;
    if (!p.exchanged) {
        p.exchanged = true;
        if (!first_relay_rtt_ && p.offered_at)
            first_relay_rtt_ = net_.now() - p.offered_at;
        stamp(Phase::Relaying);
        punch(p);
    } else if (addr_changed) {
        p.punched = false;
        if (!p.punch_inflight)
            punch(p);
    }
}

void BootstrapSession::punch(PeerState& p)
{
    auto candidates = udp_candidates(p.addresses);
    if (candidates.empty()) {
        p.punched = true;
        punch_concluded(p.id);
        return;
    }
    p.punch_inflight = true;
    const ids::NodeId id = p.id;
    priv_.dial(id, std::move(candidates), true,
        [this, alive = alive_, id](bool, const ids::NodeId&) {
            if (!*alive || !running_)
                return;
            auto it = peers_.find(id);
            if (it == peers_.end())
                return;
            it->second.punch_inflight = false;
            it->second.punched = true;
            punch_concluded(id);
        });
}

// After the punch concludes either way. A failed punch leaves the provider
// relay as the permanent wire; the offering side dials it so both ends hold
// a live link. dial_relay must not start before the punch ends, or the punch
// dial would fold into it and never probe.
void BootstrapSession::punch_concluded(const ids::NodeId& id)
{
    auto it = peers_.find(id);
    if (it == peers_.end())
        return;
    refresh_outcome(it->second);
    auto l = priv_.links().find(id);
    bool up = l != priv_.links().end() && l->second.up();
    if (up || !(priv_.id() < id))
        return;
    priv_.dial_relay(id, it->second.wire, [this, alive = alive_, id](bool, const ids::NodeId&) {
        if (!*alive || !running_)
            return;
        auto it2 = peers_.find(id);
        if (it2 != peers_.end())
            refresh_outcome(it2->second);
    });
}

void BootstrapSession::refresh_outcome(PeerState& p)
{
    auto it = priv_.links().find(p.id);
    if (it == priv_.links().end() || !it->second.up())
        return;
    switch (it->second.wire.kind) {
    case overlay::WireKind::Direct:
        p.outcome = LinkOutcome::Direct;
        break;
    case overlay::WireKind::Tunnel:
        p.outcome = LinkOutcome::Tunneled;
        break;
    case overlay::WireKind::Relay:
        p.outcome = LinkOutcome::Relayed;
        break;
    }
    p.direct = p.outcome == LinkOutcome::Direct;
}

void BootstrapSession::check_connectivity()
{
    if (round_open_ || peers_.empty())
        return;
    std::vector<ids::NodeId> targets;
    for (const auto& [id, p] : peers_)
        targets.push_back(id);
    round_open_ = true;
    struct Round {
        std::size_t pending = 0;
        bool all_ok = true;
    };
    auto round = std::make_shared<Round>();
    round->pending = targets.size();
    for (const auto& id : targets) {
        priv_.link_ping(
            id,
            [this, alive = alive_, round](bool ok, Time) {
                if (!*alive)
                    return;
                round->all_ok = round->all_ok && ok;
                if (--round->pending > 0)
                    return;
                round_open_ = false;
                if (!running_)
                    return;
                if (round->all_ok) {
                    all_to_all_ = true;
                    for (auto& [pid, p] : peers_)
                        refresh_outcome(p);
                    stamp(Phase::Connected);
                } else {
                    all_to_all_ = false;
                    if (phase_ == Phase::Connected)
                        phase_ = Phase::Relaying;
                }
            },
            cfg_.ping_timeout);
    }
}

} // namespace ringboot::bootstrap
