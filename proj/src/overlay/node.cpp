#include "ringboot/overlay/node.hpp"

#include <algorithm>
#include <memory>

namespace ringboot::overlay {

namespace {

    constexpr Time kCandidateTtl = seconds(60);

    int wire_rank(WireKind k)
    {
        return int(k); // direct 0 < tunnel 1 < relay 2
    }

} // namespace

std::string_view to_string(LinkState s)
{
    switch (s) {
    case LinkState::Candidate:
        return "candidate";
    case LinkState::Handshaking:
        return "handshaking";
    case LinkState::Connected:
        return "connected";
    case LinkState::Tunneled:
        return "tunneled";
    case LinkState::Closed:
        return "closed";
    }
    return "?";
}

std::string_view to_string(WireKind k)
{
    switch (k) {
    case WireKind::Direct:
        return "direct";
    case WireKind::Tunnel:
        return "tunneled";
    case WireKind::Relay:
        return "relayed";
    }
    return "?";
}

OverlayNode::OverlayNode(sim::Network& net, Transport& transport, NodeConfig cfg)
    : net_(net)
    , transport_(transport)
    , cfg_(std::move(cfg))
{
}

void OverlayNode::start()
{
    stopped_ = false;
    if (running_)
        return;
    running_ = true;
    auto arm_stabilize = std::make_shared<std::function<void()>>();
    *arm_stabilize = [this, arm_stabilize] {
        if (!running_)
            return;
        stabilize();
        stabilize_timer_ = net_.schedule_after(cfg_.stabilize_period, *arm_stabilize);
    };
    stabilize_timer_ = net_.schedule_after(cfg_.stabilize_period, *arm_stabilize);

    auto arm_ping = std::make_shared<std::function<void()>>();
    *arm_ping = [this, arm_ping] {
        if (!running_)
            return;
        ping_round();
        ping_timer_ = net_.schedule_after(cfg_.ping_period, *arm_ping);
    };
    ping_timer_ = net_.schedule_after(cfg_.ping_period, *arm_ping);
}

void OverlayNode::join(std::vector<sim::Endpoint> seeds)
{
    seeds_ = std::move(seeds);
    if (!running_)
        start();
    auto burst_done = std::make_shared<bool>(false);
    for (const auto& seed : seeds_) {
        if (seed == transport_.local_endpoint())
            continue;
        dial({}, { seed }, false, [this, burst_done](bool up, const ids::NodeId& peer) {
            if (!up || *burst_done)
                return;
            *burst_done = true;
            // Aggressive phase: ask the seed for its neighborhood and route a
            // connect request towards our own id so the ring-closest node
            // dials us back.
            if (const auto* l = link(peer); l && l->up())
                send_to_link(*l, Frame { PeersReq { next_token() } });
            connect_to_me(cfg_.id);
            stabilize();
        });
    }
}

void OverlayNode::leave()
{
    for (auto& [peer, l] : links_)
        if (l.up())
            send_to_link(l, Frame { Close {} });
    halt();
}

void OverlayNode::halt()
{
    running_ = false;
    stopped_ = true;
    net_.cancel_timer(stabilize_timer_);
    net_.cancel_timer(ping_timer_);
    links_.clear();
    by_endpoint_.clear();
    for (auto& [token, d] : dials_)
        net_.cancel_timer(d.timer);
    dials_.clear();
    inbound_.clear();
    for (auto& [token, p] : app_pings_)
        net_.cancel_timer(p.timer);
    app_pings_.clear();
    candidates_.clear();
    seeds_.clear();
}

std::uint32_t OverlayNode::next_token()
{
    for (;;) {
        auto t = std::uint32_t(net_.rng()());
        if (t != 0 && !dials_.count(t) && !inbound_.count(t) && !app_pings_.count(t))
            return t;
    }
}

// --- dialing ----------------------------------------------------------------

OverlayNode::Dial* OverlayNode::dial_to(const ids::NodeId& peer)
{
    if (peer.is_zero())
        return nullptr;
    for (auto& [token, d] : dials_)
        if (d.peer == peer)
            return &d;
    return nullptr;
}

void OverlayNode::dial(const ids::NodeId& peer, std::vector<sim::Endpoint> candidates, bool punch,
    DialCallback cb)
{
    if (peer == cfg_.id) {
        if (cb)
            cb(false, peer);
        return;
    }
    if (const auto* l = link(peer); l && l->up()) {
        if (cb)
            cb(true, peer);
        return;
    }
    if (auto* d = dial_to(peer)) {
        for (const auto& c : candidates)
            if (std::find(d->candidates.begin(), d->candidates.end(), c) == d->candidates.end())
                d->candidates.push_back(c);
        if (cb)
            d->callbacks.push_back(std::move(cb));
        return;
    }
    if (candidates.empty()) {
        if (cb)
            cb(false, peer);
        return;
    }
    Dial d;
    d.token = next_token();
    d.peer = peer;
    d.candidates = std::move(candidates);
    d.wire.kind = WireKind::Direct;
    d.punch = punch;
    d.attempts_left = cfg_.dial_retries;
    d.deadline = net_.now() + cfg_.punch_deadline;
    if (cb)
        d.callbacks.push_back(std::move(cb));
    start_dial(std::move(d));
}

void OverlayNode::dial_tunnel(const ids::NodeId& peer, const ids::NodeId& forwarder,
    DialCallback cb)
{
    const auto* f = link(forwarder);
    if (peer == cfg_.id || !f || !f->up() || f->wire.kind != WireKind::Direct) {
        if (cb)
            cb(false, peer);
        return;
    }
    if (const auto* l = link(peer); l && l->up()) {
        if (cb)
            cb(true, peer);
        return;
    }
    if (auto* d = dial_to(peer)) {
        if (cb)
            d->callbacks.push_back(std::move(cb));
        return;
    }
    Dial d;
    d.token = next_token();
    d.peer = peer;
    d.wire.kind = WireKind::Tunnel;
    d.wire.forwarder = forwarder;
    d.punch = false;
    d.attempts_left = cfg_.dial_retries;
    d.deadline = net_.now() + cfg_.punch_deadline;
    if (cb)
        d.callbacks.push_back(std::move(cb));
    start_dial(std::move(d));
}

std::uint32_t OverlayNode::add_relay_wire(const ids::NodeId& peer, RelaySender send)
{
    auto handle = next_relay_handle_++;
    relay_wires_[handle] = { peer, std::move(send) };
    return handle;
}

void OverlayNode::dial_relay(const ids::NodeId& peer, std::uint32_t handle, DialCallback cb)
{
    if (!relay_wires_.count(handle)) {
        if (cb)
            cb(false, peer);
        return;
    }
    if (const auto* l = link(peer); l && l->up()) {
        if (cb)
            cb(true, peer);
        return;
    }
    if (auto* d = dial_to(peer)) {
        if (cb)
            d->callbacks.push_back(std::move(cb));
        return;
    }
    Dial d;
    d.token = next_token();
    d.peer = peer;
    d.wire.kind = WireKind::Relay;
    d.wire.relay_handle = handle;
    d.punch = false;
    d.attempts_left = cfg_.dial_retries;
    d.deadline = net_.now() + cfg_.punch_deadline;
    if (cb)
        d.callbacks.push_back(std::move(cb));
    start_dial(std::move(d));
}

void OverlayNode::start_dial(Dial d)
{
    auto token = d.token;
    dials_.emplace(token, std::move(d));
    dial_attempt(token);
}

void OverlayNode::dial_attempt(std::uint32_t token)
{
    auto it = dials_.find(token);
    if (it == dials_.end())
        return;
    auto& d = it->second;

    auto req = encode(Frame { HandshakeReq { d.token, cfg_.id, d.peer } });
    if (d.wire.kind == WireKind::Direct) {
        // Every attempt probes all candidates; simultaneous probes are what
        // open the translation state on both sides.
        for (const auto& c : d.candidates)
            transport_.send_to(c, req);
    } else {
        send_on_wire(d.wire, d.peer, req);
    }

    if (d.punch) {
        Time next = net_.now() + cfg_.punch_interval;
        if (next < d.deadline) {
            d.timer = net_.schedule_at(next, [this, token] { dial_attempt(token); });
        } else {
            d.timer = net_.schedule_at(d.deadline, [this, token] {
                auto i = dials_.find(token);
                if (i != dials_.end())
                    finish_dial(token, false, i->second.peer);
            });
        }
    } else {
        --d.attempts_left;
        if (d.attempts_left > 0) {
            d.timer
                = net_.schedule_after(cfg_.dial_timeout, [this, token] { dial_attempt(token); });
        } else {
            d.timer = net_.schedule_after(cfg_.dial_timeout, [this, token] {
                auto i = dials_.find(token);
                if (i != dials_.end())
                    finish_dial(token, false, i->second.peer);
            });
        }
    }
}

void OverlayNode::finish_dial(std::uint32_t token, bool up, const ids::NodeId& peer)
{
    auto it = dials_.find(token);
    if (it == dials_.end())
        return;
    auto callbacks = std::move(it->second.callbacks);
    net_.cancel_timer(it->second.timer);
    dials_.erase(it);
    // The peer may have completed the handshake from its side while our
    // probes were still out; that counts as success.
    if (!up && !peer.is_zero()) {
        if (const auto* l = link(peer); l && l->up())
            up = true;
    }
    for (auto& cb : callbacks)
        cb(up, peer);
}

// --- link plumbing ----------------------------------------------------------

const Link* OverlayNode::link(const ids::NodeId& peer) const
{
    auto it = links_.find(peer);
    return it == links_.end() ? nullptr : &it->second;
}

Link& OverlayNode::adopt_link(const ids::NodeId& peer, const Wire& wire, LinkState state)
{
    auto [it, created] = links_.try_emplace(peer);
    auto& l = it->second;
    if (created) {
        l.peer = peer;
        l.state = state;
        l.wire = wire;
        l.last_recv = net_.now();
        if (wire.kind == WireKind::Direct)
            by_endpoint_[wire.direct] = peer;
        return l;
    }
    bool take_wire = false;
    if (!l.up()) {
        take_wire = true;
        if (int(state) > int(l.state))
            l.state = state;
    } else {
        // Upgrades replace the wire; an equal-rank direct wire follows the
        // latest handshake evidence (the peer may have re-bound).
        if (wire_rank(wire.kind) < wire_rank(l.wire.kind))
            take_wire = true;
        else if (wire.kind == l.wire.kind
            && (wire.kind != WireKind::Direct || !(wire.direct == l.wire.direct)))
            take_wire = true;
    }
    if (take_wire) {
        if (l.wire.kind == WireKind::Direct)
            by_endpoint_.erase(l.wire.direct);
        l.wire = wire;
        if (wire.kind == WireKind::Direct)
            by_endpoint_[wire.direct] = peer;
        if (l.up())
            l.state = wire.kind == WireKind::Direct ? LinkState::Connected : LinkState::Tunneled;
    }
    return l;
}

void OverlayNode::set_link_up(const ids::NodeId& peer, const Wire& wire,
    const sim::Endpoint& observed_self)
{
    bool was_up = false;
    if (const auto* existing = link(peer))
        was_up = existing->up();
    auto& l = adopt_link(peer, wire, LinkState::Handshaking);
    l.state = l.wire.kind == WireKind::Direct ? LinkState::Connected : LinkState::Tunneled;
    if (!was_up)
        l.established_at = net_.now();
    if (l.wire.kind == WireKind::Direct)
        l.observed_remote = l.wire.direct;
    if (wire.kind == WireKind::Direct && !observed_self.is_zero()) {
        l.observed_self = observed_self;
        learn_reflection(observed_self);
    }
    touch_link(peer);
    if (!was_up && on_link_up)
        on_link_up(peer, l);
}

void OverlayNode::close_link(const ids::NodeId& peer, bool send_close)
{
    auto it = links_.find(peer);
    if (it == links_.end())
        return;
    auto& l = it->second;
    bool was_up = l.up();
    if (send_close && was_up)
        send_to_link(l, Frame { Close {} });
    if (l.wire.kind == WireKind::Direct)
        by_endpoint_.erase(l.wire.direct);
    links_.erase(it);
    if (was_up && on_link_down)
        on_link_down(peer);
}

void OverlayNode::touch_link(const ids::NodeId& peer)
{
    auto it = links_.find(peer);
    if (it == links_.end())
        return;
    it->second.last_recv = net_.now();
    it->second.missed_pings = 0;
    it->second.ping_outstanding = false;
}

void OverlayNode::learn_reflection(const sim::Endpoint& observed)
{
    if (reflected_ && *reflected_ == observed)
        return;
    reflected_ = observed;
    if (on_reflected)
        on_reflected(observed);
}

ids::NodeId OverlayNode::peer_by_endpoint(const sim::Endpoint& e) const
{
    auto it = by_endpoint_.find(e);
    return it == by_endpoint_.end() ? ids::NodeId {} : it->second;
}

ids::NodeId OverlayNode::peer_for_wire(const Wire& w) const
{
    switch (w.kind) {
    case WireKind::Direct:
        return peer_by_endpoint(w.direct);
    case WireKind::Tunnel:
        return w.tunnel_remote;
    case WireKind::Relay: {
        auto it = relay_wires_.find(w.relay_handle);
        return it == relay_wires_.end() ? ids::NodeId {} : it->second.first;
    }
    }
    return {};
}

void OverlayNode::send_on_wire(const Wire& wire, const ids::NodeId& peer,
    const std::vector<std::uint8_t>& frame)
{
    switch (wire.kind) {
    case WireKind::Direct:
        transport_.send_to(wire.direct, frame);
        return;
    case WireKind::Tunnel: {
        const auto* f = link(wire.forwarder);
        if (!f || !f->up() || f->wire.kind != WireKind::Direct)
            return;
        auto wrapped = encode(Frame { TunnelFrame { cfg_.id, peer, frame } });
        transport_.send_to(f->wire.direct, wrapped);
        return;
    }
    case WireKind::Relay: {
        auto it = relay_wires_.find(wire.relay_handle);
        if (it != relay_wires_.end())
            it->second.second(frame);
        return;
    }
    }
}

void OverlayNode::send_to_link(const Link& l, const Frame& f)
{
    send_on_wire(l.wire, l.peer, encode(f));
}

// --- inbound ------------------------------------------------------------------

void OverlayNode::on_datagram(const sim::Datagram& d)
{
    if (stopped_)
        return;
    auto f = decode(d.payload);
    if (!f) {
        ++stats_.malformed;
        return;
    }
    Wire from;
    from.kind = WireKind::Direct;
    from.direct = d.src;
    handle_frame(*f, from, d.src);
}

void OverlayNode::on_relay_frame(std::uint32_t handle, std::span<const std::uint8_t> frame)
{
    if (stopped_)
        return;
    auto it = relay_wires_.find(handle);
    if (it == relay_wires_.end())
        return;
    auto f = decode(frame);
    if (!f) {
        ++stats_.malformed;
        return;
    }
    Wire from;
    from.kind = WireKind::Relay;
    from.relay_handle = handle;
    handle_frame(*f, from, {});
}

void OverlayNode::handle_frame(const Frame& f, const Wire& from, const sim::Endpoint& wire_src)
{
    // Any frame over a known wire proves the peer is alive.
    {
        auto peer = peer_for_wire(from);
        if (!peer.is_zero())
            touch_link(peer);
    }

    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, HandshakeReq>)
                handle_handshake_req(v, from, wire_src);
            else if constexpr (std::is_same_v<T, HandshakeReply>)
                handle_handshake_reply(v, from, wire_src);
            else if constexpr (std::is_same_v<T, HandshakeAck>)
                handle_handshake_ack(v, from, wire_src);
            else if constexpr (std::is_same_v<T, Ping>)
                send_on_wire(from, peer_for_wire(from), encode(Frame { Pong { v.token } }));
            else if constexpr (std::is_same_v<T, Pong>) {
                // liveness already noted above
            } else if constexpr (std::is_same_v<T, RoutedPacket>)
                handle_routed(v, peer_for_wire(from));
            else if constexpr (std::is_same_v<T, PeersReq>)
                handle_peers_req(v, from);
            else if constexpr (std::is_same_v<T, PeersReply>)
                handle_peers_reply(v);
            else if constexpr (std::is_same_v<T, Close>) {
                auto peer = peer_for_wire(from);
                if (!peer.is_zero()) {
                    close_link(peer, false);
                    // A goodbye is authoritative: stop wanting this peer.
                    candidates_.erase(peer);
                }
            } else if constexpr (std::is_same_v<T, TunnelFrame>)
                handle_tunnel(v, wire_src);
            else if constexpr (std::is_same_v<T, AppPing>)
                send_on_wire(from, peer_for_wire(from),
                    encode(Frame { AppPong { v.token, v.payload } }));
            else if constexpr (std::is_same_v<T, AppPong>) {
                auto it = app_pings_.find(v.token);
                if (it != app_pings_.end()) {
                    auto pending = std::move(it->second);
                    net_.cancel_timer(pending.timer);
                    app_pings_.erase(it);
                    if (pending.cb)
                        pending.cb(true, net_.now() - pending.sent_at);
                }
            }
        },
        f);
}

void OverlayNode::handle_handshake_req(const HandshakeReq& m, const Wire& from,
    const sim::Endpoint& src)
{
    if (m.initiator == cfg_.id)
        return;
    if (!m.target.is_zero() && !(m.target == cfg_.id))
        return;
    // Over a tunnel the forwarder already named the far end; ids must agree.
    if (from.kind == WireKind::Tunnel && !(from.tunnel_remote == m.initiator))
        return;
    inbound_[m.token] = InboundSession { m.initiator, from, net_.now() };
    adopt_link(m.initiator, from, LinkState::Handshaking);
    sim::Endpoint observed = from.kind == WireKind::Direct ? src : sim::Endpoint {};
    // Reply to where the request actually came from, not to any advertised
    // address; flow-specific translations only admit this exact path.
    send_on_wire(from, m.initiator,
        encode(Frame { HandshakeReply { m.token, cfg_.id, observed } }));
}

void OverlayNode::handle_handshake_reply(const HandshakeReply& m, const Wire& from,
    const sim::Endpoint& src)
{
    auto it = dials_.find(m.token);
    if (it == dials_.end())
        return;
    const auto& d = it->second;
    if (!d.peer.is_zero() && !(d.peer == m.responder))
        return;
    if (m.responder == cfg_.id)
        return;
    if (from.kind == WireKind::Tunnel && !(from.tunnel_remote == m.responder))
        return;
    sim::Endpoint observed = from.kind == WireKind::Direct ? src : sim::Endpoint {};
    send_on_wire(from, m.responder,
        encode(Frame { HandshakeAck { m.token, cfg_.id, observed } }));
    set_link_up(m.responder, from, m.observed);
    finish_dial(m.token, true, m.responder);
}

void OverlayNode::handle_handshake_ack(const HandshakeAck& m, const Wire& from,
    const sim::Endpoint& src)
{
    (void)src;
    auto it = inbound_.find(m.token);
    if (it == inbound_.end())
        return;
    if (!(it->second.initiator == m.initiator))
        return;
    if (from.kind == WireKind::Tunnel && !(from.tunnel_remote == m.initiator))
        return;
    inbound_.erase(it);
    set_link_up(m.initiator, from, m.observed);
}

void OverlayNode::handle_tunnel(const TunnelFrame& t, const sim::Endpoint& wire_src)
{
    auto via = peer_by_endpoint(wire_src);
    if (via.is_zero())
        return; // tunnels only run between connected neighbors
    if (t.dst == cfg_.id) {
        auto inner = decode(t.inner);
        if (!inner) {
            ++stats_.malformed;
            return;
        }
        Wire from;
        from.kind = WireKind::Tunnel;
        from.forwarder = via;
        from.tunnel_remote = t.src;
        handle_frame(*inner, from, {});
        return;
    }
    // Forwarder role: relay exactly one hop over a direct link.
    if (!(via == t.src))
        return;
    const auto* out = link(t.dst);
    if (!out || !out->up() || out->wire.kind != WireKind::Direct)
        return;
    ++stats_.tunnel_forwards;
    transport_.send_to(out->wire.direct, encode(Frame { t }));
}

// --- peers exchange -----------------------------------------------------------

void OverlayNode::handle_peers_req(const PeersReq& m, const Wire& from)
{
    PeersReply reply;
    reply.token = m.token;
    std::vector<ids::NodeId> chosen = near_left();
    for (const auto& id : near_right())
        if (std::find(chosen.begin(), chosen.end(), id) == chosen.end())
            chosen.push_back(id);
    for (const auto& id : chosen) {
        const auto* l = link(id);
        if (!l)
            continue;
        PeerEntry e;
        e.id = id;
        if (!l->observed_remote.is_zero())
            e.addresses.push_back(ids::TransportAddress::udp(l->observed_remote).to_string());
        e.addresses.push_back(ids::TransportAddress::brunet(id).to_string());
        reply.peers.push_back(std::move(e));
    }
    send_on_wire(from, peer_for_wire(from), encode(Frame { reply }));
}

void OverlayNode::handle_peers_reply(const PeersReply& m)
{
    for (const auto& e : m.peers) {
        if (e.id == cfg_.id)
            continue;
        learn_candidate(e.id, e.addresses);
    }
}

void OverlayNode::learn_candidate(const ids::NodeId& peer,
    const std::vector<std::string>& addresses)
{
    if (peer == cfg_.id)
        return;
    auto& info = candidates_[peer];
    info.last_seen = net_.now();
    for (const auto& text : addresses) {
        auto a = ids::parse_address(text);
        if (!a)
            continue;
        if (a->scheme == ids::AddressScheme::Udp) {
            if (std::find(info.endpoints.begin(), info.endpoints.end(), a->endpoint)
                == info.endpoints.end())
                info.endpoints.push_back(a->endpoint);
        }
    }
}

// --- routing --------------------------------------------------------------------

const Link* OverlayNode::next_hop(const ids::NodeId& dst, const ids::NodeId* exclude) const
{
    ids::NodeId best = cfg_.id;
    const Link* best_link = nullptr;
    for (const auto& [peer, l] : links_) {
        if (!l.up())
            continue;
        if (exclude && peer == *exclude)
            continue;
        if (ids::closer_to(dst, peer, best)) {
            best = peer;
            best_link = &l;
        }
    }
    return best_link;
}

bool OverlayNode::route(const ids::NodeId& dst, RouteMode mode, Proto proto,
    std::span<const std::uint8_t> payload)
{
    RoutedPacket p;
    p.dst = dst;
    p.mode = mode;
    p.hops = 0;
    p.ttl = cfg_.ttl;
    p.proto = std::uint8_t(proto);
    p.payload.assign(payload.begin(), payload.end());
    auto before = stats_.ttl_drops + stats_.no_route_drops + stats_.exact_misses;
    forward_or_deliver(std::move(p), true);
    return stats_.ttl_drops + stats_.no_route_drops + stats_.exact_misses == before;
}

void OverlayNode::set_proto_handler(Proto proto, ProtoHandler h)
{
    handlers_[proto] = std::move(h);
}

void OverlayNode::handle_routed(RoutedPacket p, const ids::NodeId& via)
{
    (void)via;
    forward_or_deliver(std::move(p), false);
}

void OverlayNode::forward_or_deliver(RoutedPacket p, bool local_origin)
{
    (void)local_origin;
    // Connect requests detour around their requester: the requester never
    // keeps its own request and nobody forwards one back to it.
    ids::NodeId ctm_requester;
    bool is_ctm = Proto(p.proto) == Proto::ConnectToMe;
    if (is_ctm) {
        auto req = peek_ctm_requester(p.payload);
        if (!req) {
            ++stats_.malformed;
            return;
        }
        ctm_requester = *req;
    }
    bool at_requester = is_ctm && ctm_requester == cfg_.id;

    const Link* hop = nullptr;
    if (at_requester) {
        // Links only; self never competes for its own request.
        ids::NodeId best;
        bool have = false;
        for (const auto& [peer, l] : links_) {
            if (!l.up())
                continue;
            if (!have || ids::closer_to(p.dst, peer, best)) {
                best = peer;
                have = true;
            }
        }
        if (!have) {
            ++stats_.no_route_drops;
            return;
        }
        hop = &links_.at(best);
    } else {
        hop = next_hop(p.dst, is_ctm ? &ctm_requester : nullptr);
        if (!hop) {
            // Nobody closer: this node is the closest live node.
            if (p.mode == RouteMode::Exact && !(p.dst == cfg_.id)) {
                ++stats_.exact_misses;
                return;
            }
            deliver_local(std::move(p));
            return;
        }
        if (p.mode == RouteMode::Exact && p.dst == cfg_.id) {
            deliver_local(std::move(p));
            return;
        }
    }

    if (p.hops >= p.ttl) {
        ++stats_.ttl_drops;
        return;
    }
    ++p.hops;
    ++stats_.forwarded;
    send_to_link(*hop, Frame { p });
}

void OverlayNode::deliver_local(RoutedPacket p)
{
    ++stats_.delivered;
    if (Proto(p.proto) == Proto::ConnectToMe) {
        handle_ctm(p);
        return;
    }
    auto it = handlers_.find(Proto(p.proto));
    if (it != handlers_.end() && it->second)
        it->second(p, {});
}

void OverlayNode::connect_to_me(const ids::NodeId& target)
{
    ConnectToMePayload payload;
    payload.is_reply = false;
    payload.requester = cfg_.id;
    payload.addresses = advertised_address_strings();
    auto mode = target == cfg_.id ? RouteMode::Closest : RouteMode::Exact;
    route(target, mode, Proto::ConnectToMe, encode_ctm(payload));
}

void OverlayNode::handle_ctm(const RoutedPacket& p)
{
    auto ctm = decode_ctm(p.payload);
    if (!ctm) {
        ++stats_.malformed;
        return;
    }
    if (ctm->requester == cfg_.id)
        return;
    learn_candidate(ctm->requester, ctm->addresses);
    if (!ctm->is_reply) {
        ConnectToMePayload reply;
        reply.is_reply = true;
        reply.requester = cfg_.id;
        reply.addresses = advertised_address_strings();
        route(ctm->requester, RouteMode::Exact, Proto::ConnectToMe, encode_ctm(reply));
    }
    if (const auto* l = link(ctm->requester); l && l->up())
        return;
    if (dial_to(ctm->requester))
        return;
    auto it = candidates_.find(ctm->requester);
    if (it == candidates_.end() || it->second.endpoints.empty())
        return;
    dial(ctm->requester, it->second.endpoints, true);
}

// --- application echo ---------------------------------------------------------

void OverlayNode::link_ping(const ids::NodeId& peer, PingCallback cb, Time timeout)
{
    const auto* l = link(peer);
    if (!l || !l->up()) {
        if (cb)
            cb(false, 0);
        return;
    }
    auto token = next_token();
    PendingAppPing pending;
    pending.cb = std::move(cb);
    pending.sent_at = net_.now();
    pending.timer = net_.schedule_after(timeout, [this, token] {
        auto it = app_pings_.find(token);
        if (it == app_pings_.end())
            return;
        auto cb2 = std::move(it->second.cb);
        app_pings_.erase(it);
        if (cb2)
            cb2(false, 0);
    });
    app_pings_.emplace(token, std::move(pending));
    send_to_link(*l, Frame { AppPing { token, {} } });
}

// --- maintenance -----------------------------------------------------------------

void OverlayNode::ping_round()
{
    std::vector<ids::NodeId> dead;
    for (auto& [peer, l] : links_) {
        if (!l.up()) {
            // Half-open handshake leftovers age out quietly.
            if (net_.now() - l.last_recv > 2 * cfg_.punch_deadline)
                dead.push_back(peer);
            continue;
        }
        if (l.ping_outstanding) {
            ++l.missed_pings;
            if (l.missed_pings >= cfg_.ping_misses) {
                dead.push_back(peer);
                continue;
            }
        }
        l.ping_token = next_token();
        l.ping_outstanding = true;
        send_to_link(l, Frame { Ping { l.ping_token } });
    }
    for (const auto& peer : dead)
        close_link(peer, false);

    for (auto it = inbound_.begin(); it != inbound_.end();) {
        if (net_.now() - it->second.started_at > cfg_.punch_deadline)
            it = inbound_.erase(it);
        else
            ++it;
    }
}

void OverlayNode::stabilize()
{
    for (auto it = candidates_.begin(); it != candidates_.end();) {
        if (net_.now() - it->second.last_seen > kCandidateTtl)
            it = candidates_.erase(it);
        else
            ++it;
    }

    bool any_up = false;
    for (const auto& [peer, l] : links_)
        if (l.up())
            any_up = true;
    if (!any_up) {
        if (!seeds_.empty() && dials_.empty())
            join(seeds_);
        return;
    }

    // Ask both ring neighbors for their neighborhoods.
    auto ask = [this](const std::vector<ids::NodeId>& side) {
        if (side.empty())
            return;
        if (const auto* l = link(side.front()); l && l->up())
            send_to_link(*l, Frame { PeersReq { next_token() } });
    };
    auto left = near_left();
    auto right = near_right();
    ask(left);
    if (left.empty() || right.empty() || !(right.front() == left.front()))
        ask(right);

    // Connect towards any closer ring positions we have learned of.
    for (const auto& want : desired_near()) {
        if (const auto* l = link(want); l && l->up())
            continue;
        if (dial_to(want))
            continue;
        auto it = candidates_.find(want);
        std::vector<sim::Endpoint> endpoints;
        if (it != candidates_.end())
            endpoints = it->second.endpoints;
        if (!endpoints.empty())
            dial(want, endpoints, true);
        connect_to_me(want);
    }
}

std::vector<ids::NodeId> OverlayNode::nearest_per_side(const std::vector<ids::NodeId>& pool,
    int k, bool right) const
{
    std::vector<ids::NodeId> sorted = pool;
    std::sort(sorted.begin(), sorted.end(), [&](const ids::NodeId& a, const ids::NodeId& b) {
        auto da = right ? cfg_.id.distance_cw(a) : a.distance_cw(cfg_.id);
        auto db = right ? cfg_.id.distance_cw(b) : b.distance_cw(cfg_.id);
        return da < db;
    });
    if (int(sorted.size()) > k)
        sorted.resize(std::size_t(k));
    return sorted;
}

std::vector<ids::NodeId> OverlayNode::near_left() const
{
    std::vector<ids::NodeId> pool;
    for (const auto& [peer, l] : links_)
        if (l.up())
            pool.push_back(peer);
    return nearest_per_side(pool, cfg_.near_k, false);
}

std::vector<ids::NodeId> OverlayNode::near_right() const
{
    std::vector<ids::NodeId> pool;
    for (const auto& [peer, l] : links_)
        if (l.up())
            pool.push_back(peer);
    return nearest_per_side(pool, cfg_.near_k, true);
}

std::vector<ids::NodeId> OverlayNode::desired_near() const
{
    std::vector<ids::NodeId> pool;
    for (const auto& [peer, l] : links_)
        if (l.up())
            pool.push_back(peer);
    for (const auto& [peer, info] : candidates_)
        if (std::find(pool.begin(), pool.end(), peer) == pool.end())
            pool.push_back(peer);
    auto want = nearest_per_side(pool, cfg_.near_k, false);
    for (const auto& id : nearest_per_side(pool, cfg_.near_k, true))
        if (std::find(want.begin(), want.end(), id) == want.end())
            want.push_back(id);
    return want;
}

std::vector<ids::TransportAddress> OverlayNode::advertised_addresses() const
{
    std::vector<ids::TransportAddress> out;
    auto local = transport_.local_endpoint();
    if (reflected_ && !(*reflected_ == local))
        out.push_back(ids::TransportAddress::udp(*reflected_));
    out.push_back(ids::TransportAddress::udp(local));
    out.push_back(ids::TransportAddress::brunet(cfg_.id));
    return out;
}

std::vector<std::string> OverlayNode::advertised_address_strings() const
{
    std::vector<std::string> out;
    for (const auto& a : advertised_addresses())
        out.push_back(a.to_string());
    return out;
}

} // namespace ringboot::overlay
