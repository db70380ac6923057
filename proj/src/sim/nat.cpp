#include "ringboot/sim/nat.hpp"

namespace ringboot::sim {

std::string to_string(NatType t)
{
    switch (t) {
    case NatType::FullCone:
        return "full_cone";
    case NatType::RestrictedCone:
        return "restricted_cone";
    case NatType::PortRestrictedCone:
        return "port_restricted_cone";
    case NatType::Symmetric:
        return "symmetric";
    }
    return "?";
}

std::optional<NatType> nat_type_from_string(std::string_view s)
{
    if (s == "full_cone")
        return NatType::FullCone;
    if (s == "restricted_cone")
        return NatType::RestrictedCone;
    if (s == "port_restricted_cone")
        return NatType::PortRestrictedCone;
    if (s == "symmetric")
        return NatType::Symmetric;
    return std::nullopt;
}

NatDevice::NatDevice(NatType type, std::uint32_t external_ip, Config cfg)
    : type_(type), external_ip_(external_ip), cfg_(cfg)
{
}

bool NatDevice::hairpin_allowed() const
{
    if (cfg_.hairpin)
        return *cfg_.hairpin;
    return type_ == NatType::FullCone;
}

NatDevice::Key NatDevice::key_for(const Endpoint& internal, const Endpoint& remote) const
{
    if (type_ == NatType::Symmetric)
        return {internal, remote};
    return {internal, Endpoint{}};
}

void NatDevice::purge_expired(Time now)
{
    for (auto it = bindings_.begin(); it != bindings_.end();) {
        if (it->second.expires_at <= now) {
            by_port_.erase(it->second.external.port);
            it = bindings_.erase(it);
        } else {
            ++it;
        }
    }
}

std::optional<std::uint16_t> NatDevice::alloc_port() const
{
    for (std::uint32_t p = cfg_.first_port; p <= cfg_.last_port; ++p) {
        if (!by_port_.count(std::uint16_t(p)))
            return std::uint16_t(p);
    }
    return std::nullopt;
}

std::optional<Endpoint> NatDevice::outbound(const Endpoint& internal, const Endpoint& remote, Time now)
{
    purge_expired(now);

    Key key = key_for(internal, remote);
    auto it = bindings_.find(key);
    if (it == bindings_.end()) {
        auto port = alloc_port();
        if (!port)
            return std::nullopt;
        NatBinding b;
        b.internal = internal;
        b.remote_key = type_ == NatType::Symmetric ? remote : Endpoint{};
        b.external = Endpoint{external_ip_, *port};
        it = bindings_.emplace(key, std::move(b)).first;
        by_port_[*port] = key;
    }

    NatBinding& b = it->second;
    b.expires_at = now + cfg_.mapping_ttl;
    switch (type_) {
    case NatType::FullCone:
        break;
    case NatType::RestrictedCone:
        b.permitted_ips.insert(remote.ip);
        break;
    case NatType::PortRestrictedCone:
    case NatType::Symmetric:
        b.permitted_remotes.insert(remote);
        break;
    }
    return b.external;
}

NatDevice::InboundResult NatDevice::inbound(const Endpoint& external_dst, const Endpoint& src, Time now) const
{
    auto pit = by_port_.find(external_dst.port);
    if (pit == by_port_.end() || external_dst.ip != external_ip_)
        return {InboundVerdict::NoBinding, {}};
    auto bit = bindings_.find(pit->second);
    if (bit == bindings_.end() || bit->second.expires_at <= now)
        return {InboundVerdict::NoBinding, {}};

    const NatBinding& b = bit->second;
    bool admit = false;
    switch (type_) {
    case NatType::FullCone:
        admit = true;
        break;
    case NatType::RestrictedCone:
        admit = b.permitted_ips.count(src.ip) > 0;
        break;
    case NatType::PortRestrictedCone:
        admit = b.permitted_remotes.count(src) > 0;
        break;
    case NatType::Symmetric:
        admit = src == b.remote_key;
        break;
    }
    if (!admit)
        return {InboundVerdict::Filtered, {}};
    return {InboundVerdict::Deliver, b.internal};
}

std::vector<NatBinding> NatDevice::bindings() const
{
    std::vector<NatBinding> out;
    out.reserve(bindings_.size());
    for (const auto& [key, b] : bindings_)
        out.push_back(b);
    return out;
}

std::optional<Endpoint> NatDevice::external_for(const Endpoint& internal, const Endpoint& remote, Time now) const
{
    auto it = bindings_.find(key_for(internal, remote));
    if (it == bindings_.end() || it->second.expires_at <= now)
        return std::nullopt;
    return it->second.external;
}

} // namespace ringboot::sim
