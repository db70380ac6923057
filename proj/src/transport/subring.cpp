#include "ringboot/transport/subring.hpp"

#include "ringboot/bytes.hpp"

#include <stdexcept>

namespace ringboot::transport {

namespace {

    ids::NodeId get_id(ByteReader& r)
    {
        ids::NodeId::Bytes b {};
        r.bytes(b.data(), b.size());
        return ids::NodeId { b };
    }

} // namespace

std::vector<std::uint8_t> encode_subring(const SubringFrame& f)
{
    ByteWriter w;
    w.bytes(f.ns.bytes());
    w.bytes(f.src.bytes());
    w.bytes(f.dst.bytes());
    w.bytes(f.payload);
    return w.take();
}

std::optional<SubringFrame> decode_subring(std::span<const std::uint8_t> data)
{
    ByteReader r(data);
    SubringFrame f;
    f.ns = get_id(r);
    f.src = get_id(r);
    f.dst = get_id(r);
    auto rest = r.rest();
    if (!r.ok())
        return std::nullopt;
    f.payload.assign(rest.begin(), rest.end());
    return f;
}

ids::TransportAddress subring_address(const ids::NodeId& public_id)
{
    return ids::TransportAddress::subring(public_id);
}

SubringHub::SubringHub(sim::Network& net, overlay::OverlayNode& public_node)
    : net_(net)
    , pub_(public_node)
{
    pub_.set_proto_handler(overlay::Proto::Subring,
        [this](const overlay::RoutedPacket& p, const ids::NodeId&) { handle_packet(p); });
}

SubringHub::~SubringHub()
{
    pub_.set_proto_handler(overlay::Proto::Subring, {});
    if (timer_armed_)
        net_.cancel_timer(queue_timer_);
}

void SubringHub::attach(const ids::NodeId& ns, overlay::OverlayNode& private_node)
{
    Attached a;
    a.node = &private_node;
    if (!rings_.emplace(ns, std::move(a)).second)
        throw std::logic_error("namespace already attached");
}

void SubringHub::detach(const ids::NodeId& ns)
{
    rings_.erase(ns);
}

SubringHub::Attached& SubringHub::ring_at(const ids::NodeId& ns)
{
    auto it = rings_.find(ns);
    if (it == rings_.end())
        throw std::logic_error("namespace not attached");
    return it->second;
}

void SubringHub::set_channel_handler(const ids::NodeId& ns, ChannelHandler h)
{
    ring_at(ns).channel = std::move(h);
}

bool SubringHub::send_channel(const ids::NodeId& ns, const ids::NodeId& dst_pub,
    std::span<const std::uint8_t> payload)
{
    auto& ring = ring_at(ns);
    SubringFrame f;
    f.ns = ns;
    f.src = ring.node->id();
    f.payload.assign(payload.begin(), payload.end());
    return dispatch(dst_pub, encode_subring(f));
}

std::uint32_t SubringHub::wire_to(const ids::NodeId& ns, const ids::NodeId& dst_pub,
    const ids::NodeId& dst_priv)
{
    auto& ring = ring_at(ns);
    if (auto it = ring.wires.find(dst_priv); it != ring.wires.end())
        return it->second;
    auto src_priv = ring.node->id();
    auto handle = ring.node->add_relay_wire(dst_priv,
        [this, ns, src_priv, dst_pub, dst_priv](std::vector<std::uint8_t> frame) {
            SubringFrame f;
            f.ns = ns;
            f.src = src_priv;
            f.dst = dst_priv;
            f.payload = std::move(frame);
            dispatch(dst_pub, encode_subring(f));
        });
    ring.wires[dst_priv] = handle;
    ring.peer_public[dst_priv] = dst_pub;
    return handle;
}

bool SubringHub::public_joined() const
{
    for (const auto& [id, link] : pub_.links())
        if (link.up())
            return true;
    return false;
}

bool SubringHub::dispatch(const ids::NodeId& dst_pub, std::vector<std::uint8_t> packet)
{
    ++stats_.sent;
    if (dst_pub != pub_.id() && !public_joined()) {
        queue_.push_back({ dst_pub, std::move(packet), net_.now() + kQueueTimeout });
        ++stats_.queued;
        arm_queue_timer();
        return true;
    }
    if (!pub_.route(dst_pub, overlay::RouteMode::Exact, overlay::Proto::Subring, packet)) {
        ++stats_.route_misses;
        return false;
    }
    return true;
}

void SubringHub::arm_queue_timer()
{
    if (timer_armed_)
        return;
    timer_armed_ = true;
    queue_timer_ = net_.schedule_after(kQueuePoll, [this] { flush_queue(); });
}

void SubringHub::flush_queue()
{
    timer_armed_ = false;
    auto now = net_.now();
    bool joined = public_joined();
    std::vector<QueuedFrame> keep;
    for (auto& q : queue_) {
        if (joined || q.dst_pub == pub_.id()) {
            if (!pub_.route(q.dst_pub, overlay::RouteMode::Exact, overlay::Proto::Subring,
                    q.packet))
                ++stats_.route_misses;
        } else if (now >= q.deadline) {
            ++stats_.queue_drops;
        } else {
            keep.push_back(std::move(q));
        }
    }
    queue_ = std::move(keep);
    if (!queue_.empty())
        arm_queue_timer();
}

void SubringHub::handle_packet(const overlay::RoutedPacket& p)
{
    auto f = decode_subring(p.payload);
    if (!f) {
        ++stats_.malformed_drops;
        return;
    }
    auto it = rings_.find(f->ns);
    if (it == rings_.end()) {
        ++stats_.namespace_drops;
        return;
    }
    auto& ring = it->second;
    if (f->dst.is_zero()) {
        if (!ring.channel) {
            ++stats_.wire_drops;
            return;
        }
        ++stats_.delivered;
        ring.channel(f->src, f->payload);
        return;
    }
    if (f->dst != ring.node->id()) {
        ++stats_.wire_drops;
        return;
    }
    auto w = ring.wires.find(f->src);
    if (w == ring.wires.end()) {
        ++stats_.wire_drops;
        return;
    }
    ++stats_.delivered;
    ring.node->on_relay_frame(w->second, f->payload);
}

} // namespace ringboot::transport
