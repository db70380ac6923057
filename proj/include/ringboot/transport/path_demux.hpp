#pragma once

#include "ringboot/overlay/node.hpp"
#include "ringboot/sim/network.hpp"

#include <map>
#include <string>

namespace ringboot::transport {

// Reflection frames share the socket with overlay traffic. They are told
// apart by their two zero top bits plus this cookie; everything else is a
// path frame.
constexpr std::uint32_t kReflectionCookie = 0x2112A442;

bool is_reflection_frame(std::span<const std::uint8_t> frame);

constexpr std::string_view kPublicPath = "/";

// The path every host derives for a private ring, so both ends of a frame
// agree without negotiating.
std::string path_for_namespace(const ids::NodeId& ns);

// One socket, many overlays. Every path frame starts with a 1-byte path
// length and the UTF-8 path; the table routes by exact match. Sharing the
// socket keeps one NAT binding per remote endpoint no matter how many rings
// a host runs.
class PathDemux {
public:
    using Handler = std::function<void(const sim::Datagram&)>; // prefix stripped

    PathDemux(sim::Network& net, sim::HostId host, std::uint16_t port);
    ~PathDemux();

    PathDemux(const PathDemux&) = delete;
    PathDemux& operator=(const PathDemux&) = delete;

    // Duplicate registration is a usage error and throws.
    void register_path(const std::string& path, Handler h);
    void unregister_path(const std::string& path);

    // Frames carrying the reflection cookie bypass the path table.
    void set_reflection_handler(Handler h);

    void send(const std::string& path, const sim::Endpoint& dst,
        std::span<const std::uint8_t> frame);
    // No path prefix; used for reflection requests.
    void send_raw(const sim::Endpoint& dst, std::span<const std::uint8_t> frame);

    sim::Endpoint local_endpoint() const;

    struct Stats {
        std::uint64_t unknown_path_drops = 0;
        std::uint64_t malformed_drops = 0;
    };
    const Stats& stats() const { return stats_; }

private:
    void on_datagram(const sim::Datagram& d);

    sim::Network& net_;
    sim::HostId host_;
    std::uint16_t port_;
    std::map<std::string, Handler> paths_;
    Handler reflection_;
    Stats stats_;
};

// One overlay's view of a shared socket.
class UdpPathTransport : public overlay::Transport {
public:
    UdpPathTransport(PathDemux& mux, std::string path);
    ~UdpPathTransport() override;

    void send_to(const sim::Endpoint& dst, std::span<const std::uint8_t> frame) override;
    sim::Endpoint local_endpoint() const override;

    const std::string& path() const { return path_; }

    std::function<void(const sim::Datagram&)> sink;

private:
    PathDemux& mux_;
    std::string path_;
};

} // namespace ringboot::transport
