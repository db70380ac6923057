#include "ringboot/dht/dht.hpp"

#include "ringboot/bytes.hpp"

#include <algorithm>
#include <stdexcept>

namespace ringboot::dht {

namespace {

    void put_id(ByteWriter& w, const ids::NodeId& id)
    {
        w.bytes(id.bytes());
    }

    ids::NodeId get_id(ByteReader& r)
    {
        ids::NodeId::Bytes b {};
        r.bytes(b.data(), b.size());
        return ids::NodeId { b };
    }

} // namespace

// --- lease store --------------------------------------------------------------

bool LeaseStore::put(const ids::NodeId& key, Value value, Time expires_at,
    const ids::NodeId& origin)
{
    auto& entries = by_key_[key];
    for (auto& e : entries) {
        if (e.value == value) {
            e.expires_at = std::max(e.expires_at, expires_at);
            e.origin = origin;
            return false;
        }
    }
    entries.push_back(LeaseEntry { key, std::move(value), expires_at, origin });
    return true;
}

std::vector<Value> LeaseStore::get(const ids::NodeId& key, Time now) const
{
    std::vector<Value> out;
    auto it = by_key_.find(key);
    if (it == by_key_.end())
        return out;
    for (const auto& e : it->second)
        if (e.expires_at > now)
            out.push_back(e.value);
    return out;
}

std::size_t LeaseStore::sweep(Time now)
{
    std::size_t removed = 0;
    for (auto it = by_key_.begin(); it != by_key_.end();) {
        auto& entries = it->second;
        auto dead = std::remove_if(entries.begin(), entries.end(),
            [now](const LeaseEntry& e) { return e.expires_at <= now; });
        removed += std::size_t(entries.end() - dead);
        entries.erase(dead, entries.end());
        if (entries.empty())
            it = by_key_.erase(it);
        else
            ++it;
    }
    return removed;
}

const std::vector<LeaseEntry>* LeaseStore::entries(const ids::NodeId& key) const
{
    auto it = by_key_.find(key);
    return it == by_key_.end() ? nullptr : &it->second;
}

std::size_t LeaseStore::size() const
{
    std::size_t n = 0;
    for (const auto& [key, entries] : by_key_)
        n += entries.size();
    return n;
}

// --- rpc codec ------------------------------------------------------------------

std::vector<std::uint8_t> encode_rpc(const DhtRpc& rpc)
{
    ByteWriter w;
    w.u8(std::uint8_t(rpc.kind));
    w.u32(rpc.token);
    put_id(w, rpc.origin);
    put_id(w, rpc.key);
    switch (rpc.kind) {
    case RpcKind::Put:
        w.u32(rpc.ttl_s);
        w.u16(std::uint16_t(rpc.value.size()));
        w.bytes(rpc.value);
        break;
    case RpcKind::Get:
    case RpcKind::PutAck:
        break;
    case RpcKind::GetReply:
        w.u8(std::uint8_t(rpc.values.size()));
        for (const auto& v : rpc.values) {
            w.u16(std::uint16_t(v.size()));
            w.bytes(v);
        }
        break;
    }
    return w.take();
}

std::optional<DhtRpc> decode_rpc(std::span<const std::uint8_t> data)
{
    ByteReader r(data);
    DhtRpc rpc;
    auto kind = r.u8();
    if (kind < 1 || kind > 4)
        return std::nullopt;
    rpc.kind = RpcKind(kind);
    rpc.token = r.u32();
    rpc.origin = get_id(r);
    rpc.key = get_id(r);
    switch (rpc.kind) {
    case RpcKind::Put: {
        rpc.ttl_s = r.u32();
        auto n = r.u16();
        if (n > kMaxValueBytes)
            return std::nullopt;
        rpc.value.resize(n);
        if (!r.bytes(rpc.value.data(), n))
            return std::nullopt;
        break;
    }
    case RpcKind::Get:
    case RpcKind::PutAck:
        break;
    case RpcKind::GetReply: {
        auto count = r.u8();
        if (count > kMaxValuesPerKey)
            return std::nullopt;
        for (std::size_t i = 0; i < count; ++i) {
            auto n = r.u16();
            if (n > kMaxValueBytes)
                return std::nullopt;
            Value v(n);
            if (!r.bytes(v.data(), n))
                return std::nullopt;
            rpc.values.push_back(std::move(v));
        }
        break;
    }
    }
    if (!r.ok() || !r.done())
        return std::nullopt;
    return rpc;
}

// --- node -----------------------------------------------------------------------

DhtNode::DhtNode(sim::Network& net, overlay::OverlayNode& node)
    : net_(net)
    , node_(node)
{
    node_.set_proto_handler(overlay::Proto::DhtRpc,
        [this](const overlay::RoutedPacket& packet, const ids::NodeId&) { handle_rpc(packet); });
}

DhtNode::~DhtNode()
{
    stop();
}

void DhtNode::start()
{
    if (running_)
        return;
    running_ = true;
    auto arm = std::make_shared<std::function<void()>>();
    *arm = [this, arm] {
        if (!running_)
            return;
        expire_sweep();
        sweep_timer_ = net_.schedule_after(kSweepPeriod, *arm);
    };
    sweep_timer_ = net_.schedule_after(kSweepPeriod, *arm);
}

void DhtNode::stop()
{
    running_ = false;
    net_.cancel_timer(sweep_timer_);
    for (auto& [token, p] : pending_)
        net_.cancel_timer(p.timer);
    pending_.clear();
    for (auto& [handle, m] : maintained_)
        net_.cancel_timer(m.timer);
    maintained_.clear();
}

std::size_t DhtNode::expire_sweep()
{
    return store_.sweep(net_.now());
}

std::uint32_t DhtNode::next_token()
{
    for (;;) {
        auto t = std::uint32_t(net_.rng()());
        if (t != 0 && !pending_.count(t))
            return t;
    }
}

void DhtNode::put(const ids::NodeId& key, Value value, std::uint32_t ttl_s, PutCallback cb)
{
    if (value.size() > kMaxValueBytes)
        throw std::invalid_argument("dht value exceeds 1 KiB");
    if (seconds(ttl_s) < kMinTtl || seconds(ttl_s) > kMaxTtl)
        throw std::invalid_argument("dht ttl out of range");
    auto token = next_token();
    Pending p;
    p.kind = RpcKind::Put;
    p.key = key;
    p.value = std::move(value);
    p.ttl_s = ttl_s;
    p.attempts_left = 1 + kRpcRetries;
    p.put_cb = std::move(cb);
    pending_.emplace(token, std::move(p));
    send_request(token);
}

void DhtNode::get(const ids::NodeId& key, GetCallback cb)
{
    auto token = next_token();
    Pending p;
    p.kind = RpcKind::Get;
    p.key = key;
    p.attempts_left = 1 + kRpcRetries;
    p.get_cb = std::move(cb);
    pending_.emplace(token, std::move(p));
    send_request(token);
}

void DhtNode::send_request(std::uint32_t token)
{
    auto it = pending_.find(token);
    if (it == pending_.end())
        return;
    auto& p = it->second;
    --p.attempts_left;

    DhtRpc rpc;
    rpc.kind = p.kind;
    rpc.token = token;
    rpc.origin = node_.id();
    rpc.key = p.key;
    rpc.ttl_s = p.ttl_s;
    rpc.value = p.value;
    node_.route(p.key, overlay::RouteMode::Closest, overlay::Proto::DhtRpc, encode_rpc(rpc));

    p.timer = net_.schedule_after(kRpcTimeout, [this, token] {
        auto i = pending_.find(token);
        if (i == pending_.end())
            return;
        if (i->second.attempts_left > 0)
            send_request(token);
        else
            fail_request(token);
    });
}

void DhtNode::fail_request(std::uint32_t token)
{
    auto it = pending_.find(token);
    if (it == pending_.end())
        return;
    auto p = std::move(it->second);
    net_.cancel_timer(p.timer);
    pending_.erase(it);
    if (p.kind == RpcKind::Put && p.put_cb)
        p.put_cb(false);
    else if (p.kind == RpcKind::Get && p.get_cb)
        p.get_cb({}, false);
}

std::uint32_t DhtNode::maintain(const ids::NodeId& key, Value value, std::uint32_t ttl_s)
{
    auto handle = next_handle_++;
    Maintained m;
    m.key = key;
    m.value = value;
    m.ttl_s = ttl_s;
    maintained_.emplace(handle, std::move(m));

    put(key, std::move(value), ttl_s);
    auto arm = std::make_shared<std::function<void()>>();
    *arm = [this, arm, handle] {
        auto it = maintained_.find(handle);
        if (it == maintained_.end())
            return;
        put(it->second.key, it->second.value, it->second.ttl_s);
        it->second.timer = net_.schedule_after(seconds(it->second.ttl_s) / 2, *arm);
    };
    maintained_.at(handle).timer = net_.schedule_after(seconds(ttl_s) / 2, *arm);
    return handle;
}

void DhtNode::cancel(std::uint32_t handle)
{
    auto it = maintained_.find(handle);
    if (it == maintained_.end())
        return;
    net_.cancel_timer(it->second.timer);
    maintained_.erase(it);
}

void DhtNode::handle_rpc(const overlay::RoutedPacket& packet)
{
    auto rpc = decode_rpc(packet.payload);
    if (!rpc)
        return;
    switch (rpc->kind) {
    case RpcKind::Put: {
        if (rpc->value.size() > kMaxValueBytes)
            return;
        auto ttl = std::clamp(seconds(rpc->ttl_s), kMinTtl, kMaxTtl);
        store_.put(rpc->key, rpc->value, net_.now() + ttl, rpc->origin);
        DhtRpc ack;
        ack.kind = RpcKind::PutAck;
        ack.token = rpc->token;
        ack.origin = node_.id();
        ack.key = rpc->key;
        node_.route(rpc->origin, overlay::RouteMode::Exact, overlay::Proto::DhtRpc,
            encode_rpc(ack));
        return;
    }
    case RpcKind::Get: {
        DhtRpc reply;
        reply.kind = RpcKind::GetReply;
        reply.token = rpc->token;
        reply.origin = node_.id();
        reply.key = rpc->key;
        reply.values = store_.get(rpc->key, net_.now());
        if (reply.values.size() > kMaxValuesPerKey)
            reply.values.resize(kMaxValuesPerKey);
        node_.route(rpc->origin, overlay::RouteMode::Exact, overlay::Proto::DhtRpc,
            encode_rpc(reply));
        return;
    }
    case RpcKind::PutAck: {
        auto it = pending_.find(rpc->token);
        if (it == pending_.end() || it->second.kind != RpcKind::Put)
            return;
        auto p = std::move(it->second);
        net_.cancel_timer(p.timer);
        pending_.erase(it);
        if (p.put_cb)
            p.put_cb(true);
        return;
    }
    case RpcKind::GetReply: {
        auto it = pending_.find(rpc->token);
        if (it == pending_.end() || it->second.kind != RpcKind::Get)
            return;
        auto p = std::move(it->second);
        net_.cancel_timer(p.timer);
        pending_.erase(it);
        if (p.get_cb)
            p.get_cb(std::move(rpc->values), true);
        return;
    }
    }
}

} // namespace ringboot::dht
