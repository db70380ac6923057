#pragma once

#include "ringboot/sim/network.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace ringboot::rendezvous {

using sim::Time;
using sim::ms;
using sim::seconds;

// Federated presence service. Accounts live on one server each; servers
// forward presence and queries for remote accounts over a server-to-server
// link, one hop per frame. Frames are binary, kind byte first.

// jid forms: bare "account@domain", full "account@domain/resource".
std::string_view jid_domain(std::string_view jid);
std::string_view jid_account(std::string_view jid); // strips the resource
std::string_view jid_resource(std::string_view jid); // empty when bare
bool jid_is_full(std::string_view jid);

// client -> server
struct Login {
    std::string account;
    std::string resource;
};
struct Logout {
};
struct Presence {
    bool online = false;
};
struct Iq {
    std::uint32_t token = 0;
    std::string to; // full jid
    std::vector<std::uint8_t> payload;
};

// server -> client
struct PresenceEvent {
    std::string from; // full jid
    bool online = false;
};
struct IqEvent {
    std::uint32_t token = 0;
    std::string from; // full jid
    std::vector<std::uint8_t> payload;
};
struct IqError {
    std::uint32_t token = 0;
};

// server <-> server
struct S2sPresence {
    std::string from; // full jid
    std::string to;   // bare account fans out; full jid hits one session
    bool online = false;
};
struct S2sProbe {
    std::string from; // full jid the answers go back to
    std::string to;   // bare account
};
struct S2sIq {
    std::uint32_t token = 0;
    std::string from; // full jid
    std::string to;   // full jid
    std::vector<std::uint8_t> payload;
};
struct S2sIqError {
    std::uint32_t token = 0;
    std::string to; // full jid of the original sender
};

using FedFrame = std::variant<Login, Logout, Presence, Iq, PresenceEvent, IqEvent, IqError,
    S2sPresence, S2sProbe, S2sIq, S2sIqError>;

std::vector<std::uint8_t> encode_fed(const FedFrame& f);
std::optional<FedFrame> decode_fed(std::span<const std::uint8_t> bytes);

// One domain's server. Participating domains are introduced to each other up
// front; account rosters are mutual and declared by the scenario.
class FederationServer {
public:
    static constexpr std::uint16_t kClientPort = 5222;
    static constexpr std::uint16_t kS2sPort = 5269;

    FederationServer(sim::Network& net, std::string domain, int site = 0);
    ~FederationServer();

    FederationServer(const FederationServer&) = delete;
    FederationServer& operator=(const FederationServer&) = delete;

    const std::string& domain() const { return domain_; }
    sim::HostId host() const { return host_; }
    sim::Endpoint client_endpoint() const { return { net_.host_ip(host_), kClientPort }; }
    sim::Endpoint s2s_endpoint() const { return { net_.host_ip(host_), kS2sPort }; }

    void add_account(const std::string& bare_jid); // must name this domain
    // Mutual subscription; each server adds the side it hosts.
    void subscribe(const std::string& a, const std::string& b);
    void federate_with(FederationServer& other); // introduces both directions

    struct Stats {
        std::uint64_t presence_events = 0; // delivered to clients
        std::uint64_t iq_delivered = 0;
        std::uint64_t iq_errors = 0;
        std::uint64_t s2s_out = 0;
        std::uint64_t dropped = 0; // malformed, unknown account, not subscribed
    };
    const Stats& stats() const { return stats_; }

private:
    struct Session {
        std::string account;
        std::string full;
        sim::Endpoint client;
        bool online = false;
    };

    void on_client(const sim::Datagram& d);
    void on_s2s(const sim::Datagram& d);
    void to_client(const Session& s, const FedFrame& f);
    void to_server(const std::string& domain, const FedFrame& f);
    bool subscribed(const std::string& local_account, const std::string& other) const;
    void fan_presence(const Session& s, bool online);
    void probe_contacts(const Session& s);
    // Delivers to one session (full jid) or every online session (bare).
    void deliver_presence(const std::string& to, const std::string& from, bool online);
    void deliver_iq(std::uint32_t token, const std::string& from, const std::string& to,
        std::span<const std::uint8_t> payload, const std::string& error_to);

    sim::Network& net_;
    std::string domain_;
    sim::HostId host_;
    std::set<std::string> accounts_;
    std::map<std::string, std::set<std::string>> roster_; // local account -> contacts
    std::map<std::string, sim::Endpoint> peers_;          // domain -> s2s endpoint
    std::map<std::string, Session> sessions_;             // full jid -> session
    std::map<sim::Endpoint, std::string> by_endpoint_;    // client endpoint -> full jid
    Stats stats_;
};

// One account's connection to its home server.
class FederationClient {
public:
    FederationClient(sim::Network& net, sim::HostId host, sim::Endpoint server,
        std::string account);
    ~FederationClient();

    FederationClient(const FederationClient&) = delete;
    FederationClient& operator=(const FederationClient&) = delete;

    void login(const std::string& resource);
    void logout();
    void set_presence(bool online);

    std::uint32_t send_iq(const std::string& to_full, std::span<const std::uint8_t> payload);

    const std::string& account() const { return account_; }
    const std::string& resource() const { return resource_; }
    std::string full_jid() const { return account_ + "/" + resource_; }
    bool logged_in() const { return logged_in_; }

    std::function<void(const std::string& from_full, bool online)> on_presence;
    std::function<void(std::uint32_t token, const std::string& from_full,
        std::span<const std::uint8_t> payload)>
        on_iq;
    std::function<void(std::uint32_t token)> on_iq_error;

private:
    void on_datagram(const sim::Datagram& d);

    sim::Network& net_;
    sim::HostId host_;
    std::uint16_t port_;
    sim::Endpoint server_;
    std::string account_;
    std::string resource_;
    bool logged_in_ = false;
    std::uint32_t next_token_ = 1;
};

} // namespace ringboot::rendezvous
