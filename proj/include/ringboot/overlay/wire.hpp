#pragma once

#include "ringboot/ids/node_id.hpp"
#include "ringboot/sim/endpoint.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace ringboot::overlay {

// Frame kind bytes all have the 0x40 bit set so the first two bits are never
// both zero; that keeps them disjoint from reflection-service messages on a
// shared socket.
enum class FrameKind : std::uint8_t {
    HandshakeReq = 0x41,
    HandshakeReply = 0x42,
    HandshakeAck = 0x43,
    Ping = 0x44,
    Pong = 0x45,
    Routed = 0x46,
    PeersReq = 0x47,
    PeersReply = 0x48,
    Close = 0x49,
    Tunnel = 0x4A,
    AppPing = 0x4B,
    AppPong = 0x4C,
};

enum class RouteMode : std::uint8_t { Closest = 0, Exact = 1 };

enum class Proto : std::uint8_t {
    DhtRpc = 1,
    ConnectToMe = 2,
    Subring = 3,
    TunnelControl = 4, // reserved: tunnels set up over the forwarder link itself
    App = 5,
};

// Three-way link handshake. The request doubles as a punch probe; the reply
// and ack carry the sender's view of the peer's source endpoint, which is how
// passive reflection works.
struct HandshakeReq {
    std::uint32_t token = 0;
    ids::NodeId initiator;
    ids::NodeId target; // all-zero = any node at this address may answer
};

struct HandshakeReply {
    std::uint32_t token = 0;
    ids::NodeId responder;
    sim::Endpoint observed; // where the request appeared to come from
};

struct HandshakeAck {
    std::uint32_t token = 0;
    ids::NodeId initiator;
    sim::Endpoint observed; // where the reply appeared to come from
};

struct Ping {
    std::uint32_t token = 0;
};

struct Pong {
    std::uint32_t token = 0;
};

struct RoutedPacket {
    ids::NodeId dst;
    RouteMode mode = RouteMode::Closest;
    std::uint16_t hops = 0;
    std::uint16_t ttl = 64;
    std::uint8_t proto = 0;
    std::vector<std::uint8_t> payload;
};

struct PeersReq {
    std::uint32_t token = 0;
};

struct PeerEntry {
    ids::NodeId id;
    std::vector<std::string> addresses; // canonical text forms
};

struct PeersReply {
    std::uint32_t token = 0;
    std::vector<PeerEntry> peers;
};

struct Close {
};

// One-hop encapsulation relayed by a shared neighbor.
struct TunnelFrame {
    ids::NodeId src;
    ids::NodeId dst;
    std::vector<std::uint8_t> inner;
};

struct AppPing {
    std::uint32_t token = 0;
    std::vector<std::uint8_t> payload;
};

struct AppPong {
    std::uint32_t token = 0;
    std::vector<std::uint8_t> payload;
};

using Frame = std::variant<HandshakeReq, HandshakeReply, HandshakeAck, Ping, Pong, RoutedPacket,
    PeersReq, PeersReply, Close, TunnelFrame, AppPing, AppPong>;

std::vector<std::uint8_t> encode(const Frame& f);
// nullopt on any truncated, oversize, or unknown-kind input.
std::optional<Frame> decode(std::span<const std::uint8_t> bytes);

// ConnectToMe payload (Proto::ConnectToMe). A request asks the receiver to
// dial back and to answer with its own addresses; a reply only dials.
struct ConnectToMePayload {
    bool is_reply = false;
    ids::NodeId requester;
    std::vector<std::string> addresses;
};

std::vector<std::uint8_t> encode_ctm(const ConnectToMePayload& p);
std::optional<ConnectToMePayload> decode_ctm(std::span<const std::uint8_t> bytes);
// Requester id without a full decode, for the routing detour rule.
std::optional<ids::NodeId> peek_ctm_requester(std::span<const std::uint8_t> bytes);

// Length-prefixed address list, shared by rendezvous values and replies.
std::vector<std::uint8_t> encode_address_list(const std::vector<std::string>& addresses);
std::optional<std::vector<std::string>> decode_address_list(std::span<const std::uint8_t> bytes);

} // namespace ringboot::overlay
