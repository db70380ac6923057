#include "ringboot/rendezvous/federation.hpp"

#include "ringboot/bytes.hpp"

#include <algorithm>

namespace ringboot::rendezvous {

std::string_view jid_domain(std::string_view jid)
{
    auto bare = jid_account(jid);
    auto at = bare.find('@');
    return at == std::string_view::npos ? std::string_view {} : bare.substr(at + 1);
}

std::string_view jid_account(std::string_view jid)
{
    auto slash = jid.find('/');
    return slash == std::string_view::npos ? jid : jid.substr(0, slash);
}

std::string_view jid_resource(std::string_view jid)
{
    auto slash = jid.find('/');
    return slash == std::string_view::npos ? std::string_view {} : jid.substr(slash + 1);
}

bool jid_is_full(std::string_view jid) { return jid.find('/') != std::string_view::npos; }

namespace {

    enum class Kind : std::uint8_t {
        Login = 1,
        Logout = 2,
        Presence = 3,
        Iq = 4,
        PresenceEvent = 5,
        IqEvent = 6,
        IqError = 7,
        S2sPresence = 8,
        S2sProbe = 9,
        S2sIq = 10,
        S2sIqError = 11,
    };

} // namespace

std::vector<std::uint8_t> encode_fed(const FedFrame& f)
{
    ByteWriter w;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Login>) {
                w.u8(std::uint8_t(Kind::Login));
                w.str(v.account);
                w.str(v.resource);
            } else if constexpr (std::is_same_v<T, Logout>) {
                w.u8(std::uint8_t(Kind::Logout));
            } else if constexpr (std::is_same_v<T, Presence>) {
                w.u8(std::uint8_t(Kind::Presence));
                w.u8(v.online ? 1 : 0);
            } else if constexpr (std::is_same_v<T, Iq>) {
                w.u8(std::uint8_t(Kind::Iq));
                w.u32(v.token);
                w.str(v.to);
                w.bytes(v.payload);
            } else if constexpr (std::is_same_v<T, PresenceEvent>) {
                w.u8(std::uint8_t(Kind::PresenceEvent));
                w.str(v.from);
                w.u8(v.online ? 1 : 0);
            } else if constexpr (std::is_same_v<T, IqEvent>) {
                w.u8(std::uint8_t(Kind::IqEvent));
                w.u32(v.token);
                w.str(v.from);
                w.bytes(v.payload);
            } else if constexpr (std::is_same_v<T, IqError>) {
                w.u8(std::uint8_t(Kind::IqError));
                w.u32(v.token);
            } else if constexpr (std::is_same_v<T, S2sPresence>) {
                w.u8(std::uint8_t(Kind::S2sPresence));
                w.str(v.from);
                w.str(v.to);
                w.u8(v.online ? 1 : 0);
            } else if constexpr (std::is_same_v<T, S2sProbe>) {
                w.u8(std::uint8_t(Kind::S2sProbe));
                w.str(v.from);
                w.str(v.to);
            } else if constexpr (std::is_same_v<T, S2sIq>) {
                w.u8(std::uint8_t(Kind::S2sIq));
                w.u32(v.token);
                w.str(v.from);
                w.str(v.to);
                w.bytes(v.payload);
            } else if constexpr (std::is_same_v<T, S2sIqError>) {
                w.u8(std::uint8_t(Kind::S2sIqError));
                w.u32(v.token);
                w.str(v.to);
            }
        },
        f);
    return w.take();
}

std::optional<FedFrame> decode_fed(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    auto kind = r.u8();
    std::optional<FedFrame> f;
    switch (Kind(kind)) {
    case Kind::Login: {
        Login v;
        v.account = r.str();
        v.resource = r.str();
        f = std::move(v);
        break;
    }
    case Kind::Logout:
        f = Logout {};
        break;
    case Kind::Presence: {
        Presence v;
        v.online = r.u8() != 0;
        f = v;
        break;
    }
    case Kind::Iq: {
        Iq v;
        v.token = r.u32();
        v.to = r.str();
        auto rest = r.rest();
        v.payload.assign(rest.begin(), rest.end());
        f = std::move(v);
        break;
    }
    case Kind::PresenceEvent: {
        PresenceEvent v;
        v.from = r.str();
        v.online = r.u8() != 0;
        f = std::move(v);
        break;
    }
    case Kind::IqEvent: {
        IqEvent v;
        v.token = r.u32();
        v.from = r.str();
        auto rest = r.rest();
        v.payload.assign(rest.begin(), rest.end());
        f = std::move(v);
        break;
    }
    case Kind::IqError: {
        IqError v;
        v.token = r.u32();
        f = v;
        break;
    }
    case Kind::S2sPresence: {
        S2sPresence v;
        v.from = r.str();
        v.to = r.str();
        v.online = r.u8() != 0;
        f = std::move(v);
        break;
    }
    case Kind::S2sProbe: {
        S2sProbe v;
        v.from = r.str();
        v.to = r.str();
        f = std::move(v);
        break;
    }
    case Kind::S2sIq: {
        S2sIq v;
        v.token = r.u32();
        v.from = r.str();
        v.to = r.str();
        auto rest = r.rest();
        v.payload.assign(rest.begin(), rest.end());
        f = std::move(v);
        break;
    }
    case Kind::S2sIqError: {
        S2sIqError v;
        v.token = r.u32();
        v.to = r.str();
        f = std::move(v);
        break;
    }
    default:
        return std::nullopt;
    }
    if (!r.ok() || !r.done())
        return std::nullopt;
    return f;
}

FederationServer::FederationServer(sim::Network& net, std::string domain, int site)
    : net_(net)
    , domain_(std::move(domain))
    , host_(net.create_host(site))
{
    net_.bind(host_, kClientPort, [this](const sim::Datagram& d) { on_client(d); });
    net_.bind(host_, kS2sPort, [this](const sim::Datagram& d) { on_s2s(d); });
}

FederationServer::~FederationServer()
{
    net_.unbind(host_, kClientPort);
    net_.unbind(host_, kS2sPort);
}

void FederationServer::add_account(const std::string& bare_jid)
{
    if (jid_domain(bare_jid) != domain_ || jid_is_full(bare_jid))
        throw std::invalid_argument("account must be bare and name this domain");
    accounts_.insert(bare_jid);
}

void FederationServer::subscribe(const std::string& a, const std::string& b)
{
    if (accounts_.count(a))
        roster_[a].insert(b);
    if (accounts_.count(b))
        roster_[b].insert(a);
}

void FederationServer::federate_with(FederationServer& other)
{
    peers_[other.domain_] = other.s2s_endpoint();
    other.peers_[domain_] = s2s_endpoint();
}

void FederationServer::to_client(const Session& s, const FedFrame& f)
{
    net_.send(host_, kClientPort, s.client, encode_fed(f));
}

void FederationServer::to_server(const std::string& domain, const FedFrame& f)
{
    auto it = peers_.find(domain);
    if (it == peers_.end()) {
        ++stats_.dropped;
        return;
    }
    ++stats_.s2s_out;
    net_.send(host_, kS2sPort, it->second, encode_fed(f));
}

bool FederationServer::subscribed(const std::string& local_account, const std::string& other) const
{
    auto it = roster_.find(local_account);
    return it != roster_.end() && it->second.count(other) > 0;
}

void FederationServer::deliver_presence(const std::string& to, const std::string& from, bool online)
{
    if (jid_is_full(to)) {
        auto it = sessions_.find(to);
        if (it != sessions_.end() && it->second.online) {
            ++stats_.presence_events;
            to_client(it->second, PresenceEvent { from, online });
        }
        return;
    }
    for (auto& [full, s] : sessions_)
        if (s.account == to && s.online) {
            ++stats_.presence_events;
            to_client(s, PresenceEvent { from, online });
        }
}

void FederationServer::fan_presence(const Session& s, bool online)
{
    auto it = roster_.find(s.account);
    if (it == roster_.end())
        return;
    for (const auto& contact : it->second) {
        if (jid_domain(contact) == domain_)
            deliver_presence(contact, s.full, online);
        else
            to_server(std::string(jid_domain(contact)), S2sPresence { s.full, contact, online });
    }
}

void FederationServer::probe_contacts(const Session& s)
{
    auto it = roster_.find(s.account);
    if (it == roster_.end())
        return;
    for (const auto& contact : it->second) {
        if (jid_domain(contact) == domain_) {
            for (auto& [full, c] : sessions_)
                if (c.account == contact && c.online && full != s.full) {
                    ++stats_.presence_events;
                    to_client(s, PresenceEvent { c.full, true });
                }
        } else {
            to_server(std::string(jid_domain(contact)), S2sProbe { s.full, contact });
        }
    }
}

void FederationServer::deliver_iq(std::uint32_t token, const std::string& from,
    const std::string& to, std::span<const std::uint8_t> payload, const std::string& error_to)
{
    auto fail = [&] {
        ++stats_.iq_errors;
        auto it = sessions_.find(error_to);
        if (it != sessions_.end())
            to_client(it->second, IqError { token });
    };
    if (jid_domain(to) == domain_) {
        auto it = sessions_.find(to);
        if (it == sessions_.end() || !it->second.online) {
            fail();
            return;
        }
        ++stats_.iq_delivered;
        std::vector<std::uint8_t> p(payload.begin(), payload.end());
        to_client(it->second, IqEvent { token, from, std::move(p) });
        return;
    }
    auto domain = std::string(jid_domain(to));
    if (!peers_.count(domain)) {
        fail();
        return;
    }
    std::vector<std::uint8_t> p(payload.begin(), payload.end());
    to_server(domain, S2sIq { token, from, to, std::move(p) });
}

void FederationServer::on_client(const sim::Datagram& d)
{
    auto f = decode_fed(d.payload);
    if (!f) {
        ++stats_.dropped;
        return;
    }
    if (auto* login = std::get_if<Login>(&*f)) {
        if (!accounts_.count(login->account) || login->resource.empty()) {
            ++stats_.dropped;
            return;
        }
        auto prev = by_endpoint_.find(d.src);
        if (prev != by_endpoint_.end() && prev->second != login->account + "/" + login->resource)
            sessions_.erase(prev->second);
        Session s;
        s.account = login->account;
        s.full = login->account + "/" + login->resource;
        s.client = d.src;
        s.online = true;
        by_endpoint_[d.src] = s.full;
        auto& stored = sessions_[s.full] = s;
        fan_presence(stored, true);
        probe_contacts(stored);
        return;
    }
    auto by = by_endpoint_.find(d.src);
    if (by == by_endpoint_.end()) {
        ++stats_.dropped;
        return;
    }
    auto sess = sessions_.find(by->second);
    if (sess == sessions_.end()) {
        ++stats_.dropped;
        return;
    }
    Session& s = sess->second;
    if (std::get_if<Logout>(&*f)) {
        s.online = false;
        fan_presence(s, false);
        sessions_.erase(sess);
        by_endpoint_.erase(by);
    } else if (auto* pres = std::get_if<Presence>(&*f)) {
        if (pres->online == s.online)
            return;
        s.online = pres->online;
        fan_presence(s, pres->online);
        if (pres->online)
            probe_contacts(s);
    } else if (auto* iq = std::get_if<Iq>(&*f)) {
        deliver_iq(iq->token, s.full, iq->to, iq->payload, s.full);
    } else {
        ++stats_.dropped;
    }
}

void FederationServer::on_s2s(const sim::Datagram& d)
{
    auto f = decode_fed(d.payload);
    if (!f) {
        ++stats_.dropped;
        return;
    }
    if (auto* pres = std::get_if<S2sPresence>(&*f)) {
        auto local = std::string(jid_account(pres->to));
        if (!accounts_.count(local) || !subscribed(local, std::string(jid_account(pres->from)))) {
            ++stats_.dropped;
            return;
        }
        deliver_presence(pres->to, pres->from, pres->online);
    } else if (auto* probe = std::get_if<S2sProbe>(&*f)) {
        auto local = probe->to;
        if (!accounts_.count(local) || !subscribed(local, std::string(jid_account(probe->from)))) {
            ++stats_.dropped;
            return;
        }
        for (auto& [full, c] : sessions_)
            if (c.account == local && c.online)
                to_server(std::string(jid_domain(probe->from)),
                    S2sPresence { c.full, probe->from, true });
    } else if (auto* iq = std::get_if<S2sIq>(&*f)) {
        auto it = sessions_.find(iq->to);
        if (it == sessions_.end() || !it->second.online) {
            ++stats_.iq_errors;
            to_server(std::string(jid_domain(iq->from)), S2sIqError { iq->token, iq->from });
            return;
        }
        ++stats_.iq_delivered;
        to_client(it->second, IqEvent { iq->token, iq->from, iq->payload });
    } else if (auto* err = std::get_if<S2sIqError>(&*f)) {
        auto it = sessions_.find(err->to);
        if (it != sessions_.end())
            to_client(it->second, IqError { err->token });
    } else {
        ++stats_.dropped;
    }
}

FederationClient::FederationClient(sim::Network& net, sim::HostId host, sim::Endpoint server,
    std::string account)
    : net_(net)
    , host_(host)
    , port_(net.alloc_port(host))
    , server_(server)
    , account_(std::move(account))
{
    net_.bind(host_, port_, [this](const sim::Datagram& d) { on_datagram(d); });
}

FederationClient::~FederationClient() { net_.unbind(host_, port_); }

void FederationClient::login(const std::string& resource)
{
    resource_ = resource;
    logged_in_ = true;
    net_.send(host_, port_, server_, encode_fed(Login { account_, resource_ }));
}

void FederationClient::logout()
{
    if (!logged_in_)
        return;
    logged_in_ = false;
    net_.send(host_, port_, server_, encode_fed(Logout {}));
}

void FederationClient::set_presence(bool online)
{
    net_.send(host_, port_, server_, encode_fed(Presence { online }));
}

std::uint32_t FederationClient::send_iq(const std::string& to_full,
    std::span<const std::uint8_t> payload)
{
    std::uint32_t token = next_token_++;
    std::vector<std::uint8_t> p(payload.begin(), payload.end());
    net_.send(host_, port_, server_, encode_fed(Iq { token, to_full, std::move(p) }));
    return token;
}

void FederationClient::on_datagram(const sim::Datagram& d)
{
    auto f = decode_fed(d.payload);
    if (!f)
        return;
    if (auto* pres = std::get_if<PresenceEvent>(&*f)) {
        if (on_presence)
            on_presence(pres->from, pres->online);
    } else if (auto* iq = std::get_if<IqEvent>(&*f)) {
        if (on_iq)
            on_iq(iq->token, iq->from, iq->payload);
    } else if (auto* err = std::get_if<IqError>(&*f)) {
        if (on_iq_error)
            on_iq_error(err->token);
    }
}

} // namespace ringboot::rendezvous
