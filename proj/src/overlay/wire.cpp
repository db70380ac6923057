#include "ringboot/overlay/wire.hpp"

#include "ringboot/bytes.hpp"

namespace ringboot::overlay {

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

    void put_endpoint(ByteWriter& w, const sim::Endpoint& e)
    {
        w.u32(e.ip);
        w.u16(e.port);
    }

    sim::Endpoint get_endpoint(ByteReader& r)
    {
        sim::Endpoint e;
        e.ip = r.u32();
        e.port = r.u16();
        return e;
    }

    constexpr std::size_t kMaxAddresses = 32;
    constexpr std::size_t kMaxPeers = 32;

    void put_strings(ByteWriter& w, const std::vector<std::string>& v)
    {
        w.u8(std::uint8_t(v.size()));
        for (const auto& s : v)
            w.str(s);
    }

    bool get_strings(ByteReader& r, std::vector<std::string>& out)
    {
        std::size_t n = r.u8();
        if (n > kMaxAddresses)
            return false;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(r.str());
        return r.ok();
    }

} // namespace

std::vector<std::uint8_t> encode(const Frame& f)
{
    ByteWriter w;
    std::visit(
        [&w](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, HandshakeReq>) {
                w.u8(std::uint8_t(FrameKind::HandshakeReq));
                w.u32(v.token);
                put_id(w, v.initiator);
                put_id(w, v.target);
            } else if constexpr (std::is_same_v<T, HandshakeReply>) {
                w.u8(std::uint8_t(FrameKind::HandshakeReply));
                w.u32(v.token);
                put_id(w, v.responder);
                put_endpoint(w, v.observed);
            } else if constexpr (std::is_same_v<T, HandshakeAck>) {
                w.u8(std::uint8_t(FrameKind::HandshakeAck));
                w.u32(v.token);
                put_id(w, v.initiator);
                put_endpoint(w, v.observed);
            } else if constexpr (std::is_same_v<T, Ping>) {
                w.u8(std::uint8_t(FrameKind::Ping));
                w.u32(v.token);
            } else if constexpr (std::is_same_v<T, Pong>) {
                w.u8(std::uint8_t(FrameKind::Pong));
                w.u32(v.token);
            } else if constexpr (std::is_same_v<T, RoutedPacket>) {
                w.u8(std::uint8_t(FrameKind::Routed));
                put_id(w, v.dst);
                w.u8(std::uint8_t(v.mode));
                w.u16(v.hops);
                w.u16(v.ttl);
                w.u8(v.proto);
                w.u16(std::uint16_t(v.payload.size()));
                w.bytes(v.payload);
            } else if constexpr (std::is_same_v<T, PeersReq>) {
                w.u8(std::uint8_t(FrameKind::PeersReq));
                w.u32(v.token);
            } else if constexpr (std::is_same_v<T, PeersReply>) {
                w.u8(std::uint8_t(FrameKind::PeersReply));
                w.u32(v.token);
                w.u8(std::uint8_t(v.peers.size()));
                for (const auto& p : v.peers) {
                    put_id(w, p.id);
                    put_strings(w, p.addresses);
                }
            } else if constexpr (std::is_same_v<T, Close>) {
                w.u8(std::uint8_t(FrameKind::Close));
            } else if constexpr (std::is_same_v<T, TunnelFrame>) {
                w.u8(std::uint8_t(FrameKind::Tunnel));
                put_id(w, v.src);
                put_id(w, v.dst);
                w.bytes(v.inner);
            } else if constexpr (std::is_same_v<T, AppPing>) {
                w.u8(std::uint8_t(FrameKind::AppPing));
                w.u32(v.token);
                w.u16(std::uint16_t(v.payload.size()));
                w.bytes(v.payload);
            } else if constexpr (std::is_same_v<T, AppPong>) {
                w.u8(std::uint8_t(FrameKind::AppPong));
                w.u32(v.token);
                w.u16(std::uint16_t(v.payload.size()));
                w.bytes(v.payload);
            }
        },
        f);
    return w.take();
}

std::optional<Frame> decode(std::span<const std::uint8_t> bytes)
{
    if (bytes.empty())
        return std::nullopt;
    ByteReader r(bytes);
    auto kind = r.u8();
    switch (FrameKind(kind)) {
    case FrameKind::HandshakeReq: {
        HandshakeReq v;
        v.token = r.u32();
        v.initiator = get_id(r);
        v.target = get_id(r);
        if (!r.done())
            return std::nullopt;
        return Frame { v };
    }
    case FrameKind::HandshakeReply: {
        HandshakeReply v;
        v.token = r.u32();
        v.responder = get_id(r);
        v.observed = get_endpoint(r);
        if (!r.done())
            return std::nullopt;
        return Frame { v };
    }
    case FrameKind::HandshakeAck: {
        HandshakeAck v;
        v.token = r.u32();
        v.initiator = get_id(r);
        v.observed = get_endpoint(r);
        if (!r.done())
            return std::nullopt;
        return Frame { v };
    }
    case FrameKind::Ping: {
        Ping v;
        v.token = r.u32();
        if (!r.done())
            return std::nullopt;
        return Frame { v };
    }
    case FrameKind::Pong: {
        Pong v;
        v.token = r.u32();
        if (!r.done())
            return std::nullopt;
        return Frame { v };
    }
    case FrameKind::Routed: {
        RoutedPacket v;
        v.dst = get_id(r);
        auto mode = r.u8();
        if (mode > 1)
            return std::nullopt;
        v.mode = RouteMode(mode);
        v.hops = r.u16();
        v.ttl = r.u16();
        v.proto = r.u8();
        auto len = r.u16();
        if (!r.ok() || r.remaining() != len)
            return std::nullopt;
        auto rest = r.rest();
        v.payload.assign(rest.begin(), rest.end());
        return Frame { v };
    }
    case FrameKind::PeersReq: {
        PeersReq v;
        v.token = r.u32();
        if (!r.done())
            return std::nullopt;
        return Frame { v };
    }
    case FrameKind::PeersReply: {
        PeersReply v;
        v.token = r.u32();
        std::size_t n = r.u8();
        if (!r.ok() || n > kMaxPeers)
            return std::nullopt;
        for (std::size_t i = 0; i < n; ++i) {
            PeerEntry e;
            e.id = get_id(r);
            if (!get_strings(r, e.addresses))
                return std::nullopt;
            v.peers.push_back(std::move(e));
        }
        if (!r.done())
            return std::nullopt;
        return Frame { v };
    }
    case FrameKind::Close:
        if (bytes.size() != 1)
            return std::nullopt;
        return Frame { Close {} };
    case FrameKind::Tunnel: {
        TunnelFrame v;
        v.src = get_id(r);
        v.dst = get_id(r);
        if (!r.ok())
            return std::nullopt;
        auto rest = r.rest();
        if (rest.empty())
            return std::nullopt;
        v.inner.assign(rest.begin(), rest.end());
        return Frame { v };
    }
    case FrameKind::AppPing:
    case FrameKind::AppPong: {
        std::uint32_t token = r.u32();
        auto len = r.u16();
        if (!r.ok() || r.remaining() != len)
            return std::nullopt;
        auto rest = r.rest();
        std::vector<std::uint8_t> payload(rest.begin(), rest.end());
        if (FrameKind(kind) == FrameKind::AppPing)
            return Frame { AppPing { token, std::move(payload) } };
        return Frame { AppPong { token, std::move(payload) } };
    }
    }
    return std::nullopt;
}

std::vector<std::uint8_t> encode_ctm(const ConnectToMePayload& p)
{
    ByteWriter w;
    w.u8(p.is_reply ? 1 : 0);
    put_id(w, p.requester);
    put_strings(w, p.addresses);
    return w.take();
}

std::optional<ConnectToMePayload> decode_ctm(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    ConnectToMePayload p;
    auto flag = r.u8();
    if (flag > 1)
        return std::nullopt;
    p.is_reply = flag == 1;
    p.requester = get_id(r);
    if (!get_strings(r, p.addresses) || !r.done())
        return std::nullopt;
    return p;
}

std::optional<ids::NodeId> peek_ctm_requester(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    r.u8();
    auto id = get_id(r);
    if (!r.ok())
        return std::nullopt;
    return id;
}

std::vector<std::uint8_t> encode_address_list(const std::vector<std::string>& addresses)
{
    ByteWriter w;
    put_strings(w, addresses);
    return w.take();
}

std::optional<std::vector<std::string>> decode_address_list(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    std::vector<std::string> out;
    if (!get_strings(r, out) || !r.done())
        return std::nullopt;
    return out;
}

} // namespace ringboot::overlay
