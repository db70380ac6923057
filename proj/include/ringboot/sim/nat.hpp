#pragma once

#include "ringboot/sim/endpoint.hpp"
#include "ringboot/sim/time.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ringboot::sim {

enum class NatType {
    FullCone,
    RestrictedCone,
    PortRestrictedCone,
    Symmetric,
};

std::string to_string(NatType t);
std::optional<NatType> nat_type_from_string(std::string_view s);

// One translation entry. Cone types key by internal endpoint only
// (remote_key stays zero); Symmetric keys by (internal, remote_key) and
// every distinct remote gets its own external port.
struct NatBinding {
    Endpoint internal;
    Endpoint remote_key;
    Endpoint external;
    std::set<std::uint32_t> permitted_ips;  // RestrictedCone
    std::set<Endpoint> permitted_remotes;   // PortRestrictedCone
    Time expires_at = 0;
};

enum class InboundVerdict {
    Deliver,
    NoBinding,
    Filtered,
};

// A NAT device fronting one private subnet with one public external IP.
class NatDevice {
public:
    struct Config {
        Time mapping_ttl = seconds(60);
        std::uint16_t first_port = 1024;
        std::uint16_t last_port = 65535;
        // Unset derives from the type: only FullCone loops external traffic back.
        std::optional<bool> hairpin; // unset = type-derived default
    };

    NatDevice(NatType type, std::uint32_t external_ip)
        : NatDevice(type, external_ip, Config {})
    {
    }
    NatDevice(NatType type, std::uint32_t external_ip, Config cfg);

    NatType type() const { return type_; }
    std::uint32_t external_ip() const { return external_ip_; }
    bool hairpin_allowed() const;

    Config& config() { return cfg_; }

    // Outbound translation at egress time. Reuses the binding selected by the
    // type's key, else allocates the lowest free external port >= first_port.
    // Extends permitted remotes and refreshes expiry. nullopt = port space
    // exhausted.
    std::optional<Endpoint> outbound(const Endpoint& internal, const Endpoint& remote, Time now);

    // Inbound filter at arrival time. Expired bindings behave as absent.
    struct InboundResult {
        InboundVerdict verdict;
        Endpoint internal; // valid when verdict == Deliver
    };
    InboundResult inbound(const Endpoint& external_dst, const Endpoint& src, Time now) const;

    // Introspection for oracles and audits.
    std::vector<NatBinding> bindings() const;
    std::size_t binding_count() const { return bindings_.size(); }
    std::optional<Endpoint> external_for(const Endpoint& internal, const Endpoint& remote, Time now) const;

private:
    using Key = std::pair<Endpoint, Endpoint>; // (internal, remote_key)

    Key key_for(const Endpoint& internal, const Endpoint& remote) const;
    void purge_expired(Time now);
    std::optional<std::uint16_t> alloc_port() const;

    NatType type_;
    std::uint32_t external_ip_;
    Config cfg_;
    std::map<Key, NatBinding> bindings_;
    std::map<std::uint16_t, Key> by_port_;
};

} // namespace ringboot::sim
