#pragma once

#include "ringboot/sim/network.hpp"
#include "ringboot/transport/path_demux.hpp"

#include <array>
#include <functional>
#include <optional>

namespace ringboot::rendezvous {

using sim::Time;
using sim::ms;
using sim::seconds;

// Address reflection frames, fixed layout, big-endian:
//   request:  type u16 0x0001, length u16 0, cookie u32, txid 12 bytes
//   response: type u16 0x0101, length u16 6, cookie u32, txid 12 bytes,
//             observed port u16, observed ip u32
// The type's two zero top bits plus the cookie are what lets these share a
// socket with overlay traffic.
constexpr std::uint16_t kBindingRequest = 0x0001;
constexpr std::uint16_t kBindingResponse = 0x0101;
constexpr std::size_t kTxIdBytes = 12;

using TxId = std::array<std::uint8_t, kTxIdBytes>;

struct BindingResponse {
    TxId txid {};
    sim::Endpoint observed;
};

std::vector<std::uint8_t> encode_binding_request(const TxId& txid);
std::vector<std::uint8_t> encode_binding_response(const TxId& txid, const sim::Endpoint& observed);
std::optional<TxId> decode_binding_request(std::span<const std::uint8_t> data);
std::optional<BindingResponse> decode_binding_response(std::span<const std::uint8_t> data);

// Public reflector: answers every well-formed request with the source
// endpoint the request arrived from.
class StunService {
public:
    StunService(sim::Network& net, std::uint16_t port = 3478, int site = 0);
    ~StunService();

    StunService(const StunService&) = delete;
    StunService& operator=(const StunService&) = delete;

    sim::Endpoint endpoint() const { return { net_.host_ip(host_), port_ }; }
    sim::HostId host() const { return host_; }

    struct Stats {
        std::uint64_t answered = 0;
        std::uint64_t ignored = 0; // malformed or wrong type
    };
    const Stats& stats() const { return stats_; }

private:
    sim::Network& net_;
    sim::HostId host_;
    std::uint16_t port_;
    Stats stats_;
};

// Learns this socket's public mapping by asking a reflector. Rides the
// shared socket's reflection slot, so overlay traffic keeps flowing during
// the exchange. Retries once a second; reports failure after five unanswered
// sends.
class StunClient {
public:
    static constexpr Time kRetryInterval = seconds(1);
    static constexpr int kAttempts = 5;

    using Callback = std::function<void(std::optional<sim::Endpoint> mapped)>;

    StunClient(sim::Network& net, transport::PathDemux& mux);
    ~StunClient();

    StunClient(const StunClient&) = delete;
    StunClient& operator=(const StunClient&) = delete;

    // One binding at a time; a new call replaces an unfinished one.
    void bind(const sim::Endpoint& service, Callback cb);
    bool busy() const { return active_; }

private:
    void attempt();
    void finish(std::optional<sim::Endpoint> mapped);

    sim::Network& net_;
    transport::PathDemux& mux_;
    sim::Endpoint service_;
    Callback cb_;
    TxId txid_ {};
    int sends_left_ = 0;
    std::uint64_t timer_ = 0;
    bool active_ = false;
};

} // namespace ringboot::rendezvous
