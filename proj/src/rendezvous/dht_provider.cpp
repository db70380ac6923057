#include "ringboot/rendezvous/dht_provider.hpp"

#include <algorithm>
#include <stdexcept>

namespace ringboot::rendezvous {

namespace {

    // The relay address in a record is the peer's public-node subring form.
    std::optional<ids::NodeId> relay_target(const std::string& address)
    {
        auto parsed = ids::parse_address(address);
        if (!parsed || parsed->scheme != ids::AddressScheme::Subring)
            return std::nullopt;
        return parsed->node;
    }

} // namespace

DhtProvider::DhtProvider(dht::DhtNode& dht, transport::SubringHub& hub,
    overlay::OverlayNode& private_node)
    : dht_(dht)
    , hub_(hub)
    , priv_(private_node)
    , identity_(transport::subring_address(hub.public_node().id()).to_string())
{
}

DhtProvider::~DhtProvider() { withdraw(); }

void DhtProvider::announce(const ids::NodeId& ns, std::vector<std::string> addresses)
{
    if (ns_ && *ns_ != ns)
        withdraw();
    if (std::find(addresses.begin(), addresses.end(), identity_) == addresses.end())
        addresses.push_back(identity_);
    if (ns_ && addresses == announced_)
        return;
    if (!ns_) {
        ns_ = ns;
        hub_.attach(ns, priv_);
        hub_.set_channel_handler(ns, [this](const ids::NodeId& src, std::span<const std::uint8_t> p) {
            if (on_channel)
                on_channel(src, p);
        });
    }
    if (maintain_)
        dht_.cancel(maintain_);
    announced_ = std::move(addresses);
    maintain_ = dht_.maintain(ns, overlay::encode_address_list(announced_), kAnnounceTtlS);
}

void DhtProvider::withdraw()
{
    if (maintain_) {
        dht_.cancel(maintain_);
        maintain_ = 0;
    }
    if (ns_) {
        hub_.detach(*ns_);
        ns_.reset();
    }
    announced_.clear();
}

void DhtProvider::query(const ids::NodeId& ns, QueryCallback cb)
{
    dht_.get(ns, [this, cb = std::move(cb)](std::vector<dht::Value> values, bool ok) {
        std::vector<PeerRecord> peers;
        for (const auto& v : values) {
            auto addrs = overlay::decode_address_list(v);
            if (!addrs)
                continue;
            auto it = std::find_if(addrs->begin(), addrs->end(),
                [](const std::string& a) { return relay_target(a).has_value(); });
            if (it == addrs->end())
                continue;
            if (*it == identity_)
                continue;
            PeerRecord rec { *it, std::move(*addrs) };
            if (discovered_.insert(rec.identity).second && on_peer_discovered)
                on_peer_discovered(rec);
            peers.push_back(std::move(rec));
        }
        if (cb)
            cb(std::move(peers), ok);
    });
}

bool DhtProvider::channel_send(const std::string& relay_address,
    std::span<const std::uint8_t> payload)
{
    auto target = relay_target(relay_address);
    if (!target || !ns_)
        return false;
    return hub_.send_channel(*ns_, *target, payload);
}

std::uint32_t DhtProvider::relay_wire(const std::string& relay_address,
    const ids::NodeId& peer_priv)
{
    auto target = relay_target(relay_address);
    if (!target || !ns_)
        throw std::logic_error("relay wire needs an announced ring and a subring address");
    return hub_.wire_to(*ns_, *target, peer_priv);
}

} // namespace ringboot::rendezvous
