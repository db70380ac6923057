#include "ringboot/rendezvous/stun.hpp"

#include "ringboot/bytes.hpp"

namespace ringboot::rendezvous {

std::vector<std::uint8_t> encode_binding_request(const TxId& txid)
{
    ByteWriter w;
    w.u16(kBindingRequest);
    w.u16(0);
    w.u32(transport::kReflectionCookie);
    w.bytes(txid.data(), txid.size());
    return w.take();
}

std::vector<std::uint8_t> encode_binding_response(const TxId& txid, const sim::Endpoint& observed)
{
    ByteWriter w;
    w.u16(kBindingResponse);
    w.u16(6);
    w.u32(transport::kReflectionCookie);
    w.bytes(txid.data(), txid.size());
    w.u16(observed.port);
    w.u32(observed.ip);
    return w.take();
}

namespace {

    std::optional<TxId> decode_header(ByteReader& r, std::uint16_t want_type,
        std::uint16_t want_len)
    {
        if (r.u16() != want_type || r.u16() != want_len)
            return std::nullopt;
        if (r.u32() != transport::kReflectionCookie)
            return std::nullopt;
        TxId txid {};
        if (!r.bytes(txid.data(), txid.size()))
            return std::nullopt;
        return txid;
    }

} // namespace

std::optional<TxId> decode_binding_request(std::span<const std::uint8_t> data)
{
    ByteReader r(data);
    auto txid = decode_header(r, kBindingRequest, 0);
    if (!txid || !r.done())
        return std::nullopt;
    return txid;
}

std::optional<BindingResponse> decode_binding_response(std::span<const std::uint8_t> data)
{
    ByteReader r(data);
    auto txid = decode_header(r, kBindingResponse, 6);
    if (!txid)
        return std::nullopt;
    BindingResponse resp;
    resp.txid = *txid;
    resp.observed.port = r.u16();
    resp.observed.ip = r.u32();
    if (!r.done())
        return std::nullopt;
    return resp;
}

StunService::StunService(sim::Network& net, std::uint16_t port, int site)
    : net_(net)
    , host_(net.create_host(site))
    , port_(port)
{
    net_.bind(host_, port_, [this](const sim::Datagram& d) {
        auto txid = decode_binding_request(d.payload);
        if (!txid) {
            ++stats_.ignored;
            return;
        }
        ++stats_.answered;
        net_.send(host_, port_, d.src, encode_binding_response(*txid, d.src));
    });
}

StunService::~StunService() { net_.unbind(host_, port_); }

StunClient::StunClient(sim::Network& net, transport::PathDemux& mux)
    : net_(net)
    , mux_(mux)
{
    mux_.set_reflection_handler([this](const sim::Datagram& d) {
        if (!active_)
            return;
        auto resp = decode_binding_response(d.payload);
        if (!resp || resp->txid != txid_)
            return;
        finish(resp->observed);
    });
}

StunClient::~StunClient()
{
    if (active_)
        net_.cancel_timer(timer_);
    mux_.set_reflection_handler({});
}

void StunClient::bind(const sim::Endpoint& service, Callback cb)
{
    if (active_)
        net_.cancel_timer(timer_);
    service_ = service;
    cb_ = std::move(cb);
    for (auto& b : txid_)
        b = std::uint8_t(net_.rng()());
    sends_left_ = kAttempts;
    active_ = true;
    attempt();
}

void StunClient::attempt()
{
    if (sends_left_ == 0) {
        finish(std::nullopt);
        return;
    }
    --sends_left_;
    mux_.send_raw(service_, encode_binding_request(txid_));
    timer_ = net_.schedule_after(kRetryInterval, [this] { attempt(); });
}

void StunClient::finish(std::optional<sim::Endpoint> mapped)
{
    net_.cancel_timer(timer_);
    active_ = false;
    if (auto cb = std::move(cb_))
        cb(mapped);
}

} // namespace ringboot::rendezvous
