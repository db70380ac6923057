#include "ringboot/sim/network.hpp"

#include <algorithm>
#include <stdexcept>

namespace ringboot::sim {

namespace {

    // Public hosts and NAT external sides draw from one flat pool so every
    // externally visible IP is unique.
    constexpr std::uint32_t kPublicBase = (8u << 24) | (1u << 16); // 8.1.0.0
    constexpr std::uint32_t kPrivateBase = (192u << 24) | (168u << 16); // 192.168.0.0

    std::uint32_t private_ip(NatId device, std::uint32_t index)
    {
        // 192.168.D.(2+i); D wraps at 256 devices which is far beyond any
        // scenario here.
        return kPrivateBase | ((device & 0xFF) << 8) | ((index + 2) & 0xFF);
    }

} // namespace

Network::Network(NetworkConfig cfg)
    : cfg_(cfg)
    , rng_(cfg.seed)
{
}

std::uint32_t Network::next_public_ip()
{
    std::uint32_t ip = kPublicBase + ++next_public_octets_;
    if (next_public_octets_ >= 0xFFFF)
        throw std::runtime_error("public address pool exhausted");
    return ip;
}

HostId Network::create_host(int site)
{
    HostId id = static_cast<HostId>(hosts_.size());
    Host h;
    h.ip = next_public_ip();
    h.site = site;
    public_ip_to_host_[h.ip] = id;
    hosts_.push_back(std::move(h));
    return id;
}

NatId Network::create_nat(NatType type, int site)
{
    NatId id = static_cast<NatId>(nats_.size());
    NatDevice::Config nc;
    nc.mapping_ttl = cfg_.mapping_ttl;
    nats_.emplace_back(type, next_public_ip(), nc);
    external_ip_to_nat_[nats_.back().external_ip()] = id;
    private_ip_to_host_[id] = {};
    (void)site;
    return id;
}

HostId Network::create_host(NatType nat, std::optional<NatId> shared_nat, int site)
{
    NatId device = shared_nat ? *shared_nat : create_nat(nat, site);
    if (device >= nats_.size())
        throw std::invalid_argument("unknown nat device");
    if (shared_nat && nats_[device].type() != nat)
        throw std::invalid_argument("shared nat type mismatch");
    HostId id = static_cast<HostId>(hosts_.size());
    Host h;
    auto& members = private_ip_to_host_[device];
    h.ip = private_ip(device, static_cast<std::uint32_t>(members.size()));
    h.nat = device;
    h.site = site;
    if (members.count(h.ip))
        throw std::runtime_error("private address pool exhausted");
    members[h.ip] = id;
    hosts_.push_back(std::move(h));
    return id;
}

NatDevice& Network::nat(NatId id)
{
    return nats_.at(id);
}

const NatDevice& Network::nat(NatId id) const
{
    return nats_.at(id);
}

std::optional<NatId> Network::host_nat(HostId h) const
{
    return hosts_.at(h).nat;
}

std::uint32_t Network::host_ip(HostId h) const
{
    return hosts_.at(h).ip;
}

std::vector<NatId> Network::nat_ids() const
{
    std::vector<NatId> out(nats_.size());
    for (std::size_t i = 0; i < nats_.size(); ++i)
        out[i] = static_cast<NatId>(i);
    return out;
}

void Network::set_link_latency(HostId a, HostId b, Time one_way)
{
    latency_overrides_[{std::min(a, b), std::max(a, b)}] = one_way;
}

void Network::bind(HostId h, std::uint16_t port, DatagramHandler handler)
{
    auto& host = hosts_.at(h);
    if (host.bound.count(port))
        throw std::invalid_argument("port already bound");
    host.bound[port] = std::move(handler);
}

void Network::unbind(HostId h, std::uint16_t port)
{
    hosts_.at(h).bound.erase(port);
}

std::uint16_t Network::alloc_port(HostId h) const
{
    const auto& host = hosts_.at(h);
    for (std::uint32_t p = 40000; p <= 65535; ++p)
        if (!host.bound.count(static_cast<std::uint16_t>(p)))
            return static_cast<std::uint16_t>(p);
    throw std::runtime_error("no free port");
}

bool Network::is_bound(HostId h, std::uint16_t port) const
{
    return hosts_.at(h).bound.count(port) > 0;
}

int Network::site_of(HostId h) const
{
    return hosts_.at(h).site;
}

Time Network::latency_between(HostId src, HostId dst) const
{
    auto it = latency_overrides_.find({std::min(src, dst), std::max(src, dst)});
    if (it != latency_overrides_.end())
        return it->second;
    const auto& a = hosts_.at(src);
    const auto& b = hosts_.at(dst);
    if (a.nat && b.nat && *a.nat == *b.nat)
        return cfg_.lan_latency;
    return a.site == b.site ? cfg_.base_latency : cfg_.cross_latency;
}

std::optional<HostId> Network::public_host_by_ip(std::uint32_t ip) const
{
    auto it = public_ip_to_host_.find(ip);
    if (it == public_ip_to_host_.end())
        return std::nullopt;
    return it->second;
}

std::optional<NatId> Network::nat_by_external_ip(std::uint32_t ip) const
{
    auto it = external_ip_to_nat_.find(ip);
    if (it == external_ip_to_nat_.end())
        return std::nullopt;
    return it->second;
}

std::optional<HostId> Network::host_by_private_ip(NatId nat, std::uint32_t ip) const
{
    auto dev = private_ip_to_host_.find(nat);
    if (dev == private_ip_to_host_.end())
        return std::nullopt;
    auto it = dev->second.find(ip);
    if (it == dev->second.end())
        return std::nullopt;
    return it->second;
}

void Network::drop(const Endpoint& wire_src, const Endpoint& dst, std::size_t bytes,
    std::string_view verdict, HostId origin)
{
    ++hosts_.at(origin).stats.dropped;
    ++total_dropped_;
    trace_.record(now_, "drop", wire_src.to_string(), dst.to_string(), bytes, verdict);
}

void Network::deliver(HostId dst_host, const Endpoint& wire_src, const Endpoint& dst_ep,
    std::vector<std::uint8_t> payload, HostId origin)
{
    auto& host = hosts_.at(dst_host);
    auto it = host.bound.find(dst_ep.port);
    if (it == host.bound.end()) {
        drop(wire_src, dst_ep, payload.size(), "closed-port", origin);
        return;
    }
    ++host.stats.delivered;
    ++total_delivered_;
    trace_.record(now_, "deliver", wire_src.to_string(), dst_ep.to_string(), payload.size(), "ok");
    Datagram d { wire_src, dst_ep, std::move(payload) };
    it->second(d);
}

void Network::send(HostId h, std::uint16_t src_port, const Endpoint& dst,
    std::span<const std::uint8_t> payload)
{
    auto& host = hosts_.at(h);
    if (!host.bound.count(src_port))
        throw std::invalid_argument("send from unbound port");
    if (payload.size() > kMaxDatagram)
        throw std::invalid_argument("payload exceeds datagram limit");

    Endpoint local { host.ip, src_port };
    ++host.stats.sent;
    ++total_sent_;
    trace_.record(now_, "send", local.to_string(), dst.to_string(), payload.size(), "ok");

    // LAN shortcut: both ends behind the same device and the destination is a
    // private address of that device. No translation happens.
    if (host.nat) {
        if (auto peer = host_by_private_ip(*host.nat, dst.ip)) {
            Endpoint wire_src = local;
            std::vector<std::uint8_t> copy(payload.begin(), payload.end());
            HostId origin = h;
            ++pending_frames_;
            schedule_after(cfg_.lan_latency,
                [this, peer = *peer, wire_src, dst, copy = std::move(copy), origin]() mutable {
                    --pending_frames_;
                    deliver(peer, wire_src, dst, std::move(copy), origin);
                });
            return;
        }
    }

    // Outbound translation happens at send time.
    Endpoint wire_src = local;
    if (host.nat) {
        auto mapped = nats_[*host.nat].outbound(local, dst, now_);
        if (!mapped) {
            drop(local, dst, payload.size(), "nat-ports-exhausted", h);
            return;
        }
        wire_src = *mapped;
        trace_.record(now_, "xlate", local.to_string(), wire_src.to_string(), payload.size(),
            to_string(nats_[*host.nat].type()));
    }

    // Route by the destination IP.
    std::optional<HostId> pub = public_host_by_ip(dst.ip);
    std::optional<NatId> ext = nat_by_external_ip(dst.ip);
    if (!pub && !ext) {
        drop(wire_src, dst, payload.size(), "unroutable", h);
        return;
    }

    bool lost = false;
    if (cfg_.loss_probability > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        lost = u(rng_) < cfg_.loss_probability;
    }
    Time extra = 0;
    if (cfg_.jitter_max > 0) {
        std::uniform_int_distribution<Time> j(0, cfg_.jitter_max - 1);
        extra = j(rng_);
    }
    if (lost) {
        drop(wire_src, dst, payload.size(), "lost", h);
        return;
    }

    HostId route_target = 0;
    if (pub)
        route_target = *pub;
    else {
        // Latency is measured to some host behind the device; pick the first.
        const auto& members = private_ip_to_host_.at(*ext);
        route_target = members.empty() ? h : members.begin()->second;
    }
    // Hairpin: a host behind device X sending to X's own external address.
    bool hairpin = host.nat && ext && *ext == *host.nat;
    Time lat = hairpin ? cfg_.lan_latency : latency_between(h, route_target);
    Time at = now_ + lat + extra;

    std::vector<std::uint8_t> copy(payload.begin(), payload.end());
    ++pending_frames_;
    HostId origin = h;
    if (pub) {
        schedule_at(at, [this, target = *pub, wire_src, dst, copy = std::move(copy), origin]() mutable {
            --pending_frames_;
            deliver(target, wire_src, dst, std::move(copy), origin);
        });
        return;
    }

    NatId device = *ext;
    schedule_at(at, [this, device, wire_src, dst, hairpin, copy = std::move(copy), origin]() mutable {
        --pending_frames_;
        auto& nd = nats_[device];
        if (hairpin && !nd.hairpin_allowed()) {
            drop(wire_src, dst, copy.size(), "hairpin-unsupported", origin);
            return;
        }
        auto res = nd.inbound(dst, wire_src, now_);
        switch (res.verdict) {
        case InboundVerdict::NoBinding:
            drop(wire_src, dst, copy.size(), "no-binding", origin);
            return;
        case InboundVerdict::Filtered:
            drop(wire_src, dst, copy.size(), "filtered", origin);
            return;
        case InboundVerdict::Deliver:
            break;
        }
        auto inner = host_by_private_ip(device, res.internal.ip);
        if (!inner) {
            drop(wire_src, dst, copy.size(), "no-binding", origin);
            return;
        }
        deliver(*inner, wire_src, res.internal, std::move(copy), origin);
    });
}

std::uint64_t Network::schedule_at(Time t, std::function<void()> fn)
{
    if (t < now_)
        t = now_;
    std::uint64_t id = next_seq_++;
    queue_.push(Event { t, id, std::move(fn) });
    return id;
}

std::uint64_t Network::schedule_after(Time delay, std::function<void()> fn)
{
    return schedule_at(now_ + delay, std::move(fn));
}

void Network::cancel_timer(std::uint64_t id)
{
    cancelled_timers_.insert(id);
}

std::size_t Network::run_until(Time t)
{
    std::size_t fired = 0;
    while (!queue_.empty() && queue_.top().at <= t) {
        Event ev = queue_.top();
        queue_.pop();
        now_ = ev.at;
        if (cancelled_timers_.erase(ev.seq))
            continue;
        ev.fn();
        ++fired;
    }
    if (now_ < t)
        now_ = t;
    return fired;
}

const HostStats& Network::stats(HostId h) const
{
    return hosts_.at(h).stats;
}

} // namespace ringboot::sim
