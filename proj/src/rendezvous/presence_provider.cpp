#include "ringboot/rendezvous/presence_provider.hpp"

#include "ringboot/bytes.hpp"
#include "ringboot/transport/subring.hpp"

#include <algorithm>
#include <stdexcept>

namespace ringboot::rendezvous {

namespace {

    std::optional<std::string> relay_jid(const std::string& address)
    {
        auto parsed = ids::parse_address(address);
        if (!parsed || parsed->scheme != ids::AddressScheme::Xmpp)
            return std::nullopt;
        return parsed->jid;
    }

} // namespace

PresenceProvider::PresenceProvider(sim::Network& net, FederationClient& client,
    overlay::OverlayNode& private_node)
    : net_(net)
    , client_(client)
    , priv_(private_node)
{
    static constexpr char hex[] = "0123456789abcdef";
    for (int i = 0; i < 8; ++i) {
        auto b = std::uint8_t(net_.rng()());
        nonce_.push_back(hex[b >> 4]);
        nonce_.push_back(hex[b & 0xF]);
    }
    client_.on_presence = [this](const std::string& from, bool online) { on_presence(from, online); };
    client_.on_iq = [this](std::uint32_t, const std::string& from,
                        std::span<const std::uint8_t> payload) { on_iq(from, payload); };
    client_.on_iq_error = [this](std::uint32_t) { ++stats_.iq_errors; };
}

PresenceProvider::~PresenceProvider()
{
    client_.on_presence = {};
    client_.on_iq = {};
    client_.on_iq_error = {};
}

std::string PresenceProvider::identity() const
{
    // Built from the provider's own resource so it is valid before login.
    return ids::TransportAddress::xmpp(client_.account() + "/" + resource_).to_string();
}

bool PresenceProvider::matches(std::string_view full_jid) const
{
    if (!ns_ || full_jid == client_.full_jid())
        return false;
    auto res = jid_resource(full_jid);
    return res.size() > ns_hex_.size() && res.substr(0, ns_hex_.size()) == ns_hex_
        && res[ns_hex_.size()] == '.';
}

void PresenceProvider::announce(const ids::NodeId& ns, std::vector<std::string> addresses)
{
    if (ns_ && *ns_ != ns)
        withdraw();
    bool fresh = !ns_;
    if (fresh) {
        ns_ = ns;
        ns_hex_ = ns.to_hex();
        resource_ = ns_hex_ + "." + nonce_;
        if (identity().size() > ids::kMaxAddressBytes)
            throw std::invalid_argument("jid too long for an address");
    }
    auto id = identity();
    if (std::find(addresses.begin(), addresses.end(), id) == addresses.end())
        addresses.push_back(id);
    announced_ = std::move(addresses);
    if (fresh)
        client_.login(resource_);
}

void PresenceProvider::withdraw()
{
    if (!ns_)
        return;
    client_.logout();
    ns_.reset();
    ns_hex_.clear();
    announced_.clear();
    peers_.clear();
}

void PresenceProvider::query(const ids::NodeId& ns, QueryCallback cb)
{
    bool bound = ns_ && *ns_ == ns;
    std::vector<PeerRecord> peers;
    if (bound)
        for (const auto& [jid, p] : peers_)
            peers.push_back({ ids::TransportAddress::xmpp(jid).to_string(), p.addresses });
    net_.schedule_after(0, [cb = std::move(cb), peers = std::move(peers), bound]() mutable {
        if (cb)
            cb(std::move(peers), bound);
    });
}

void PresenceProvider::request_addresses()
{
    if (!ns_ || net_.now() - last_round_ < kRequestWindow)
        return;
    std::vector<const std::string*> lacking, all;
    for (const auto& [jid, p] : peers_) {
        all.push_back(&jid);
        if (p.addresses.empty())
            lacking.push_back(&jid);
    }
    auto& pick = lacking.empty() ? all : lacking;
    if (pick.empty())
        return;
    std::shuffle(pick.begin(), pick.end(), net_.rng());
    if (pick.size() > kRequestFanout)
        pick.resize(kRequestFanout);
    for (const auto* jid : pick) {
        std::uint8_t req[] = { kAddrRequest };
        send_frame(*jid, ids::NodeId {}, req);
        ++stats_.requests_sent;
    }
    last_round_ = net_.now();
}

bool PresenceProvider::channel_send(const std::string& relay_address,
    std::span<const std::uint8_t> payload)
{
    auto jid = relay_jid(relay_address);
    if (!jid || !ns_)
        return false;
    send_frame(*jid, ids::NodeId {}, payload);
    return true;
}

std::uint32_t PresenceProvider::relay_wire(const std::string& relay_address,
    const ids::NodeId& peer_priv)
{
    auto jid = relay_jid(relay_address);
    if (!jid || !ns_)
        throw std::logic_error("relay wire needs an announced ring and an xmpp address");
    wire_jids_[peer_priv] = *jid; // latest address wins
    auto it = wires_.find(peer_priv);
    if (it != wires_.end())
        return it->second;
    auto handle = priv_.add_relay_wire(peer_priv, [this, peer_priv](std::vector<std::uint8_t> frame) {
        auto jt = wire_jids_.find(peer_priv);
        if (!ns_ || jt == wire_jids_.end())
            return;
        send_frame(jt->second, peer_priv, frame);
    });
    wires_[peer_priv] = handle;
    return handle;
}

void PresenceProvider::on_presence(const std::string& from, bool online)
{
    if (!matches(from))
        return;
    if (online)
        peers_.try_emplace(from);
    else
        peers_.erase(from);
}

void PresenceProvider::on_iq(const std::string& from, std::span<const std::uint8_t> payload)
{
    if (!ns_ || !matches(from)) {
        ++stats_.iq_drops;
        return;
    }
    auto f = transport::decode_subring(payload);
    if (!f || f->ns != *ns_) {
        ++stats_.iq_drops;
        return;
    }
    if (f->dst.is_zero()) {
        if (f->payload.empty()) {
            ++stats_.iq_drops;
            return;
        }
        if (f->payload[0] == kAddrRequest) {
            peers_.try_emplace(from); // the ask proves membership even before presence lands
            ByteWriter w;
            w.u8(kAddrReply);
            w.bytes(overlay::encode_address_list(announced_));
            auto reply = w.take();
            send_frame(from, ids::NodeId {}, reply);
            ++stats_.replies_sent;
            return;
        }
        if (f->payload[0] == kAddrReply) {
            auto addrs = overlay::decode_address_list(
                std::span(f->payload).subspan(1));
            if (!addrs) {
                ++stats_.iq_drops;
                return;
            }
            auto& peer = peers_[from];
            peer.addresses = std::move(*addrs);
            if (!peer.addresses.empty() && discovered_.insert(from).second
                && on_peer_discovered)
                on_peer_discovered(
                    { ids::TransportAddress::xmpp(from).to_string(), peer.addresses });
            return;
        }
        if (on_channel)
            on_channel(f->src, f->payload);
        return;
    }
    if (f->dst == priv_.id()) {
        auto it = wires_.find(f->src);
        if (it == wires_.end()) {
            ++stats_.iq_drops;
            return;
        }
        priv_.on_relay_frame(it->second, f->payload);
        return;
    }
    ++stats_.iq_drops;
}

void PresenceProvider::send_frame(const std::string& to_full, const ids::NodeId& dst_priv,
    std::span<const std::uint8_t> payload)
{
    transport::SubringFrame f;
    f.ns = *ns_;
    f.src = priv_.id();
    f.dst = dst_priv;
    f.payload.assign(payload.begin(), payload.end());
    client_.send_iq(to_full, transport::encode_subring(f));
}

} // namespace ringboot::rendezvous
