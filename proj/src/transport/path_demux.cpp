#include "ringboot/transport/path_demux.hpp"

#include <stdexcept>

namespace ringboot::transport {

bool is_reflection_frame(std::span<const std::uint8_t> frame)
{
    if (frame.size() < 20 || (frame[0] & 0xC0) != 0)
        return false;
    std::uint32_t cookie = std::uint32_t(frame[4]) << 24 | std::uint32_t(frame[5]) << 16
        | std::uint32_t(frame[6]) << 8 | std::uint32_t(frame[7]);
    return cookie == kReflectionCookie;
}

std::string path_for_namespace(const ids::NodeId& ns)
{
    return "/" + ns.to_hex();
}

PathDemux::PathDemux(sim::Network& net, sim::HostId host, std::uint16_t port)
    : net_(net)
    , host_(host)
    , port_(port)
{
    net_.bind(host_, port_, [this](const sim::Datagram& d) { on_datagram(d); });
}

PathDemux::~PathDemux()
{
    net_.unbind(host_, port_);
}

void PathDemux::register_path(const std::string& path, Handler h)
{
    if (path.empty() || path.size() > 255)
        throw std::invalid_argument("path must be 1..255 bytes");
    if (!paths_.emplace(path, std::move(h)).second)
        throw std::logic_error("path already registered: " + path);
}

void PathDemux::unregister_path(const std::string& path)
{
    paths_.erase(path);
}

void PathDemux::set_reflection_handler(Handler h)
{
    reflection_ = std::move(h);
}

void PathDemux::send(const std::string& path, const sim::Endpoint& dst,
    std::span<const std::uint8_t> frame)
{
    std::vector<std::uint8_t> out;
    out.reserve(1 + path.size() + frame.size());
    out.push_back(std::uint8_t(path.size()));
    out.insert(out.end(), path.begin(), path.end());
    out.insert(out.end(), frame.begin(), frame.end());
    net_.send(host_, port_, dst, out);
}

void PathDemux::send_raw(const sim::Endpoint& dst, std::span<const std::uint8_t> frame)
{
    net_.send(host_, port_, dst, frame);
}

sim::Endpoint PathDemux::local_endpoint() const
{
    return { net_.host_ip(host_), port_ };
}

void PathDemux::on_datagram(const sim::Datagram& d)
{
    if (is_reflection_frame(d.payload)) {
        if (reflection_)
            reflection_(d);
        else
            ++stats_.unknown_path_drops;
        return;
    }
    if (d.payload.empty()) {
        ++stats_.malformed_drops;
        return;
    }
    std::size_t len = d.payload[0];
    if (d.payload.size() < 1 + len) {
        ++stats_.malformed_drops;
        return;
    }
    std::string path(d.payload.begin() + 1, d.payload.begin() + 1 + std::ptrdiff_t(len));
    auto it = paths_.find(path);
    if (it == paths_.end()) {
        ++stats_.unknown_path_drops;
        return;
    }
    sim::Datagram inner;
    inner.src = d.src;
    inner.dst = d.dst;
    inner.payload.assign(d.payload.begin() + 1 + std::ptrdiff_t(len), d.payload.end());
    it->second(inner);
}

UdpPathTransport::UdpPathTransport(PathDemux& mux, std::string path)
    : mux_(mux)
    , path_(std::move(path))
{
    mux_.register_path(path_, [this](const sim::Datagram& d) {
        if (sink)
            sink(d);
    });
}

UdpPathTransport::~UdpPathTransport()
{
    mux_.unregister_path(path_);
}

void UdpPathTransport::send_to(const sim::Endpoint& dst, std::span<const std::uint8_t> frame)
{
    mux_.send(path_, dst, frame);
}

sim::Endpoint UdpPathTransport::local_endpoint() const
{
    return mux_.local_endpoint();
}

} // namespace ringboot::transport
