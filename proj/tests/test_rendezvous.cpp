#include "ring_fixture.hpp"

#include "ringboot/dht/dht.hpp"
#include "ringboot/rendezvous/dht_provider.hpp"
#include "ringboot/rendezvous/federation.hpp"
#include "ringboot/rendezvous/presence_provider.hpp"
#include "ringboot/rendezvous/stun.hpp"
#include "ringboot/transport/path_demux.hpp"
#include "ringboot/transport/subring.hpp"

#include <set>

namespace {

using namespace ringboot;
using namespace ringboot::rendezvous;
using transport::PathDemux;
using transport::SubringHub;

// Every ring member stores; only some run the provider.
std::vector<std::unique_ptr<dht::DhtNode>> attach_dht(Ring& r)
{
    std::vector<std::unique_ptr<dht::DhtNode>> dhts;
    for (auto& p : r.peers) {
        dhts.push_back(std::make_unique<dht::DhtNode>(r.net, *p.node));
        dhts.back()->start();
    }
    return dhts;
}

struct DhtMember {
    std::unique_ptr<SubringHub> hub;
    PrivPeer priv;
    std::unique_ptr<DhtProvider> provider;
};

DhtMember make_dht_member(Ring& r, dht::DhtNode& dht, std::size_t i, const ids::NodeId& priv_id)
{
    DhtMember m;
    m.hub = std::make_unique<SubringHub>(r.net, *r.peers[i].node);
    m.priv = make_priv(r.net, r.peers[i].host, priv_id);
    m.provider = std::make_unique<DhtProvider>(dht, *m.hub, *m.priv.node);
    return m;
}

// One federated account running the presence-backed provider.
struct PresenceMember {
    HostId host = 0;
    std::unique_ptr<FederationClient> client;
    PrivPeer priv;
    std::unique_ptr<PresenceProvider> provider;
};

PresenceMember make_presence_member(Network& net, FederationServer& server,
    const std::string& account, const ids::NodeId& priv_id,
    std::optional<NatType> nat = std::nullopt)
{
    PresenceMember m;
    m.host = nat ? net.create_host(*nat) : net.create_host();
    m.client = std::make_unique<FederationClient>(net, m.host, server.client_endpoint(), account);
    m.priv = make_priv(net, m.host, priv_id);
    m.provider = std::make_unique<PresenceProvider>(net, *m.client, *m.priv.node);
    return m;
}

std::vector<std::uint8_t> bytes_of(std::string_view s)
{
    return { s.begin(), s.end() };
}

} // namespace

TEST_CASE("reflection frames round-trip and stay distinguishable")
{
    TxId txid {};
    for (std::size_t i = 0; i < txid.size(); ++i)
        txid[i] = std::uint8_t(i * 7 + 1);

    auto req = encode_binding_request(txid);
    CHECK(req.size() == 20);
    CHECK(transport::is_reflection_frame(req));
    auto back = decode_binding_request(req);
    REQUIRE(back.has_value());
    CHECK(*back == txid);
    CHECK_FALSE(decode_binding_response(req).has_value());

    sim::Endpoint observed { 0x0A000001, 40123 };
    auto resp = encode_binding_response(txid, observed);
    CHECK(transport::is_reflection_frame(resp));
    auto parsed = decode_binding_response(resp);
    REQUIRE(parsed.has_value());
    CHECK(parsed->txid == txid);
    CHECK(parsed->observed == observed);

    auto truncated = resp;
    truncated.pop_back();
    CHECK_FALSE(decode_binding_response(truncated).has_value());
}

TEST_CASE("a public host learns its own endpoint from the reflector")
{
    Network net;
    StunService service(net);
    auto host = net.create_host();
    auto port = net.alloc_port(host);
    PathDemux mux(net, host, port);
    StunClient client(net, mux);

    std::optional<sim::Endpoint> mapped;
    bool called = false;
    client.bind(service.endpoint(), [&](std::optional<sim::Endpoint> e) {
        called = true;
        mapped = e;
    });
    net.run_until(seconds(1));

    REQUIRE(called);
    REQUIRE(mapped.has_value());
    CHECK(*mapped == mux.local_endpoint());
    CHECK(service.stats().answered == 1);
}

TEST_CASE("a cone-natted host learns its external binding")
{
    Network net;
    StunService service(net);
    auto host = net.create_host(NatType::PortRestrictedCone);
    auto port = net.alloc_port(host);
    PathDemux mux(net, host, port);
    StunClient client(net, mux);

    std::optional<sim::Endpoint> mapped;
    client.bind(service.endpoint(), [&](std::optional<sim::Endpoint> e) { mapped = e; });
    net.run_until(seconds(1));

    REQUIRE(mapped.has_value());
    auto nat_id = net.host_nat(host);
    REQUIRE(nat_id.has_value());
    auto oracle = net.nat(*nat_id).external_for(
        { net.host_ip(host), port }, service.endpoint(), net.now());
    REQUIRE(oracle.has_value());
    CHECK(*mapped == *oracle);
    CHECK(mapped->ip != net.host_ip(host));
}

TEST_CASE("a symmetric mapping is honest only toward the reflector")
{
    Network net;
    StunService service(net);
    auto host = net.create_host(NatType::Symmetric);
    auto port = net.alloc_port(host);
    PathDemux mux(net, host, port);
    StunClient client(net, mux);

    std::optional<sim::Endpoint> mapped;
    client.bind(service.endpoint(), [&](std::optional<sim::Endpoint> e) { mapped = e; });
    net.run_until(seconds(1));
    REQUIRE(mapped.has_value());

    auto nat_id = net.host_nat(host);
    REQUIRE(nat_id.has_value());
    sim::Endpoint internal { net.host_ip(host), port };
    auto toward_service = net.nat(*nat_id).external_for(internal, service.endpoint(), net.now());
    REQUIRE(toward_service.has_value());
    CHECK(*mapped == *toward_service);

    // A different remote gets a different mapping, so the reflected endpoint
    // is useless to third parties.
    auto elsewhere = net.create_host();
    auto eport = net.alloc_port(elsewhere);
    net.bind(elsewhere, eport, [](const Datagram&) {});
    sim::Endpoint other { net.host_ip(elsewhere), eport };
    std::uint8_t probe[] = { 0xFF };
    mux.send_raw(other, probe);
    net.run_until(seconds(2));
    auto toward_other = net.nat(*nat_id).external_for(internal, other, net.now());
    REQUIRE(toward_other.has_value());
    CHECK(*toward_other != *mapped);
}

TEST_CASE("a silent reflector fails after five sends")
{
    Network net;
    auto hole = net.create_host();
    int requests = 0;
    net.bind(hole, 3478, [&](const Datagram&) { ++requests; });

    auto host = net.create_host();
    auto port = net.alloc_port(host);
    PathDemux mux(net, host, port);
    StunClient client(net, mux);

    bool failed = false;
    Time failed_at = 0;
    client.bind({ net.host_ip(hole), 3478 }, [&](std::optional<sim::Endpoint> e) {
        failed = !e.has_value();
        failed_at = net.now();
    });
    net.run_until(seconds(10));

    CHECK(failed);
    CHECK(failed_at == seconds(5));
    CHECK(requests == 5);
}

TEST_CASE("reflection requests share the socket with a live overlay")
{
    Network net;
    StunService service(net);
    auto ids2 = make_ids(2, 61);

    struct Side {
        HostId host;
        std::uint16_t port;
        std::unique_ptr<PathDemux> mux;
        std::unique_ptr<transport::UdpPathTransport> tr;
        std::unique_ptr<overlay::OverlayNode> node;
    };
    auto mk = [&](const ids::NodeId& id) {
        Side s;
        s.host = net.create_host();
        s.port = net.alloc_port(s.host);
        s.mux = std::make_unique<PathDemux>(net, s.host, s.port);
        s.tr = std::make_unique<transport::UdpPathTransport>(*s.mux, std::string(transport::kPublicPath));
        overlay::NodeConfig cfg;
        cfg.id = id;
        s.node = std::make_unique<overlay::OverlayNode>(net, *s.tr, cfg);
        s.tr->sink = [n = s.node.get()](const Datagram& d) { n->on_datagram(d); };
        return s;
    };
    auto a = mk(ids2[0]);
    auto b = mk(ids2[1]);
    a.node->start();
    b.node->join({ { net.host_ip(a.host), a.port } });
    net.run_until(seconds(5));
    REQUIRE(b.node->links().size() == 1);

    StunClient client(net, *a.mux);
    std::optional<sim::Endpoint> mapped;
    client.bind(service.endpoint(), [&](std::optional<sim::Endpoint> e) { mapped = e; });

    bool pinged = false;
    a.node->link_ping(ids2[1], [&](bool ok, Time) { pinged = ok; });
    net.run_until(seconds(8));

    REQUIRE(mapped.has_value());
    CHECK(*mapped == a.mux->local_endpoint());
    CHECK(pinged);
    CHECK(a.mux->stats().unknown_path_drops == 0);
    CHECK(a.mux->stats().malformed_drops == 0);
}

TEST_CASE("federation frames survive encode and decode")
{
    std::vector<FedFrame> frames = {
        Login { "alice@home.net", "abc.123" },
        Logout {},
        Presence { true },
        Iq { 7, "bob@home.net/xyz", bytes_of("ping") },
        PresenceEvent { "bob@home.net/xyz", false },
        IqEvent { 7, "alice@home.net/abc", bytes_of("pong") },
        IqError { 9 },
        S2sPresence { "alice@home.net/abc", "bob@away.net", true },
        S2sProbe { "alice@home.net/abc", "bob@away.net" },
        S2sIq { 3, "alice@home.net/abc", "bob@away.net/q", bytes_of("x") },
        S2sIqError { 3, "alice@home.net/abc" },
    };
    for (const auto& f : frames) {
        auto wire = encode_fed(f);
        auto back = decode_fed(wire);
        REQUIRE(back.has_value());
        CHECK(back->index() == f.index());
        CHECK(encode_fed(*back) == wire);
    }
    CHECK_FALSE(decode_fed({}).has_value());
    std::uint8_t bogus[] = { 42 };
    CHECK_FALSE(decode_fed(bogus).has_value());
    auto trunc = encode_fed(Login { "alice@home.net", "r" });
    trunc.pop_back();
    CHECK_FALSE(decode_fed(trunc).has_value());
}

TEST_CASE("an iq between two accounts on one server makes one round trip")
{
    Network net;
    FederationServer server(net, "home.net");
    server.add_account("alice@home.net");
    server.add_account("bob@home.net");

    auto ah = net.create_host();
    auto bh = net.create_host();
    FederationClient alice(net, ah, server.client_endpoint(), "alice@home.net");
    FederationClient bob(net, bh, server.client_endpoint(), "bob@home.net");
    alice.login("a");
    bob.login("b");
    net.run_until(seconds(1));

    Time sent_at = net.now();
    Time bob_got = 0, alice_got = 0;
    bob.on_iq = [&](std::uint32_t, const std::string& from, std::span<const std::uint8_t> p) {
        bob_got = net.now();
        bob.send_iq(from, p);
    };
    alice.on_iq = [&](std::uint32_t, const std::string&, std::span<const std::uint8_t>) {
        alice_got = net.now();
    };
    alice.send_iq(bob.full_jid(), bytes_of("hello"));
    net.run_until(seconds(2));

    // Client-server latency is 25 ms each way, so one relay leg is 50 ms.
    CHECK(bob_got == sent_at + ms(50));
    CHECK(alice_got == sent_at + ms(100));
    CHECK(server.stats().iq_delivered == 2);
}

TEST_CASE("a cross-domain iq crosses exactly one federation link")
{
    Network net;
    FederationServer home(net, "home.net");
    FederationServer away(net, "away.net");
    home.federate_with(away);
    net.set_link_latency(home.host(), away.host(), ms(75));
    home.add_account("alice@home.net");
    away.add_account("bob@away.net");
    home.subscribe("alice@home.net", "bob@away.net");
    away.subscribe("bob@away.net", "alice@home.net");

    auto ah = net.create_host();
    auto bh = net.create_host();
    FederationClient alice(net, ah, home.client_endpoint(), "alice@home.net");
    FederationClient bob(net, bh, away.client_endpoint(), "bob@away.net");

    Time bob_saw_alice = 0;
    bob.on_presence = [&](const std::string& from, bool online) {
        if (online && from == alice.full_jid())
            bob_saw_alice = net.now();
    };
    bob.login("b");
    net.run_until(seconds(1));
    Time alice_login = net.now();
    alice.login("a");
    net.run_until(seconds(2));
    // presence: alice -> home 25, home -> away 75, away -> bob 25.
    CHECK(bob_saw_alice == alice_login + ms(125));

    Time bob_got = 0;
    bob.on_iq = [&](std::uint32_t, const std::string&, std::span<const std::uint8_t>) {
        bob_got = net.now();
    };
    auto before = home.stats().s2s_out;
    Time sent_at = net.now();
    alice.send_iq(bob.full_jid(), bytes_of("hi"));
    net.run_until(seconds(3));

    CHECK(bob_got == sent_at + ms(125));
    CHECK(home.stats().s2s_out == before + 1);
    CHECK(away.stats().iq_delivered == 1);
}

TEST_CASE("an iq to an offline peer fails after one server round trip")
{
    Network net;
    FederationServer home(net, "home.net");
    FederationServer away(net, "away.net");
    home.federate_with(away);
    net.set_link_latency(home.host(), away.host(), ms(75));
    home.add_account("alice@home.net");
    home.add_account("ghost@home.net");
    away.add_account("phantom@away.net");

    auto ah = net.create_host();
    FederationClient alice(net, ah, home.client_endpoint(), "alice@home.net");
    alice.login("a");
    net.run_until(seconds(1));

    std::map<std::uint32_t, Time> failed;
    alice.on_iq_error = [&](std::uint32_t token) { failed[token] = net.now(); };

    Time sent_at = net.now();
    auto t1 = alice.send_iq("ghost@home.net/missing", bytes_of("x"));
    auto t2 = alice.send_iq("phantom@away.net/missing", bytes_of("x"));
    net.run_until(seconds(2));

    REQUIRE(failed.count(t1));
    REQUIRE(failed.count(t2));
    // Local bounce: one trip to the home server and back.
    CHECK(failed[t1] == sent_at + ms(50));
    // Remote bounce: the error comes back across the same federation link.
    CHECK(failed[t2] == sent_at + ms(25 + 75 + 75 + 25));
}

TEST_CASE("presence reaches only subscribed contacts")
{
    Network net;
    FederationServer server(net, "home.net");
    for (auto name : { "alice", "bob", "nosy" })
        server.add_account(std::string(name) + "@home.net");
    server.subscribe("alice@home.net", "bob@home.net");

    struct Watcher {
        std::unique_ptr<FederationClient> client;
        std::set<std::string> seen;
    };
    std::map<std::string, Watcher> w;
    for (auto name : { "alice", "bob", "nosy" }) {
        auto& entry = w[name];
        entry.client = std::make_unique<FederationClient>(
            net, net.create_host(), server.client_endpoint(), std::string(name) + "@home.net");
        entry.client->on_presence = [&entry](const std::string& from, bool online) {
            if (online)
                entry.seen.insert(std::string(jid_account(from)));
        };
    }
    w["alice"].client->login("a");
    net.run_until(ms(500));
    w["bob"].client->login("b");
    w["nosy"].client->login("n");
    net.run_until(seconds(2));

    // The late login still learns the earlier one through the roster probe.
    CHECK(w["bob"].seen == std::set<std::string> { "alice@home.net" });
    CHECK(w["alice"].seen == std::set<std::string> { "bob@home.net" });
    CHECK(w["nosy"].seen.empty());
}

TEST_CASE("an announced record is queryable through the storage ring")
{
    auto r = make_ring(8);
    auto dhts = attach_dht(r);
    auto priv_ids = make_ids(2, 71);
    auto ns = make_ids(1, 72)[0];
    auto a = make_dht_member(r, *dhts[0], 0, priv_ids[0]);
    auto b = make_dht_member(r, *dhts[1], 1, priv_ids[1]);

    std::vector<PeerRecord> a_found;
    int a_events = 0;
    a.provider->on_peer_discovered = [&](const PeerRecord&) { ++a_events; };

    std::string udp = "udp://9.9.9.9:1000";
    b.provider->announce(ns, { udp });
    b.provider->announce(ns, { udp }); // idempotent repeat
    r.net.run_until(r.converged_at + seconds(2));

    bool definitive = false;
    a.provider->query(ns, [&](std::vector<PeerRecord> peers, bool ok) {
        a_found = std::move(peers);
        definitive = ok;
    });
    r.net.run_until(r.converged_at + seconds(4));

    REQUIRE(definitive);
    REQUIRE(a_found.size() == 1);
    CHECK(a_found[0].identity == b.provider->identity());
    // The given addresses stay first; the relay identity is appended.
    REQUIRE(a_found[0].addresses.size() == 2);
    CHECK(a_found[0].addresses[0] == udp);
    CHECK(a_found[0].addresses[1] == b.provider->identity());
    CHECK(a_events == 1);

    // The announcer's own query excludes itself.
    bool b_definitive = false;
    std::size_t b_count = 99;
    b.provider->query(ns, [&](std::vector<PeerRecord> peers, bool ok) {
        b_count = peers.size();
        b_definitive = ok;
    });
    r.net.run_until(r.converged_at + seconds(6));
    REQUIRE(b_definitive);
    CHECK(b_count == 0);
}

TEST_CASE("a withdrawn record expires off the ring")
{
    auto r = make_ring(8);
    auto dhts = attach_dht(r);
    auto priv_ids = make_ids(2, 73);
    auto ns = make_ids(1, 74)[0];
    auto a = make_dht_member(r, *dhts[2], 2, priv_ids[0]);
    auto b = make_dht_member(r, *dhts[5], 5, priv_ids[1]);

    b.provider->announce(ns, { "udp://9.9.9.9:1000" });
    r.net.run_until(r.converged_at + seconds(2));

    std::size_t before = 0;
    a.provider->query(ns, [&](std::vector<PeerRecord> peers, bool) { before = peers.size(); });
    r.net.run_until(r.converged_at + seconds(4));
    REQUIRE(before == 1);

    b.provider->withdraw();
    // The lease has up to its full ttl left, plus one sweep.
    r.net.run_until(r.converged_at + seconds(4) + seconds(DhtProvider::kAnnounceTtlS) + seconds(2));

    std::size_t after = 99;
    bool definitive = false;
    a.provider->query(ns, [&](std::vector<PeerRecord> peers, bool ok) {
        after = peers.size();
        definitive = ok;
    });
    r.net.run_until(r.net.now() + seconds(2));
    REQUIRE(definitive);
    CHECK(after == 0);
}

TEST_CASE("two announcers under one key are both found")
{
    auto r = make_ring(8);
    auto dhts = attach_dht(r);
    auto priv_ids = make_ids(3, 75);
    auto ns = make_ids(1, 76)[0];
    auto a = make_dht_member(r, *dhts[0], 0, priv_ids[0]);
    auto b = make_dht_member(r, *dhts[3], 3, priv_ids[1]);
    auto c = make_dht_member(r, *dhts[6], 6, priv_ids[2]);

    a.provider->announce(ns, { "udp://1.1.1.1:1" });
    b.provider->announce(ns, { "udp://2.2.2.2:2" });
    r.net.run_until(r.converged_at + seconds(2));

    std::vector<PeerRecord> found;
    c.provider->query(ns, [&](std::vector<PeerRecord> peers, bool) { found = std::move(peers); });
    r.net.run_until(r.converged_at + seconds(4));

    REQUIRE(found.size() == 2);
    std::set<std::string> identities;
    for (const auto& p : found)
        identities.insert(p.identity);
    CHECK(identities
        == std::set<std::string> { a.provider->identity(), b.provider->identity() });

    // Each announcer sees exactly the other.
    std::vector<PeerRecord> a_found;
    a.provider->query(ns, [&](std::vector<PeerRecord> peers, bool) { a_found = std::move(peers); });
    r.net.run_until(r.converged_at + seconds(6));
    REQUIRE(a_found.size() == 1);
    CHECK(a_found[0].identity == b.provider->identity());
}

TEST_CASE("the dht provider carries channel frames and relay wires")
{
    auto r = make_ring(8);
    auto dhts = attach_dht(r);
    auto priv_ids = make_ids(2, 77);
    auto ns = make_ids(1, 78)[0];
    auto a = make_dht_member(r, *dhts[1], 1, priv_ids[0]);
    auto b = make_dht_member(r, *dhts[4], 4, priv_ids[1]);

    a.provider->announce(ns, {});
    b.provider->announce(ns, {});
    r.net.run_until(r.converged_at + seconds(2));

    ids::NodeId channel_src;
    std::vector<std::uint8_t> channel_payload;
    b.provider->on_channel = [&](const ids::NodeId& src, std::span<const std::uint8_t> p) {
        channel_src = src;
        channel_payload.assign(p.begin(), p.end());
    };
    REQUIRE(a.provider->channel_send(b.provider->identity(), bytes_of("offer")));
    r.net.run_until(r.converged_at + seconds(3));
    CHECK(channel_src == priv_ids[0]);
    CHECK(channel_payload == bytes_of("offer"));

    // Wires on both ends make the handle a full link transport.
    auto wa = a.provider->relay_wire(b.provider->identity(), priv_ids[1]);
    b.provider->relay_wire(a.provider->identity(), priv_ids[0]);
    bool up = false;
    a.priv.node->dial_relay(priv_ids[1], wa, [&](bool ok, const ids::NodeId&) { up = ok; });
    r.net.run_until(r.converged_at + seconds(8));
    REQUIRE(up);

    bool pinged = false;
    a.priv.node->link_ping(priv_ids[1], [&](bool ok, Time) { pinged = ok; });
    r.net.run_until(r.converged_at + seconds(12));
    CHECK(pinged);
    auto* link = a.priv.node->links().count(priv_ids[1])
        ? &a.priv.node->links().at(priv_ids[1])
        : nullptr;
    REQUIRE(link != nullptr);
    CHECK(link->wire.kind == overlay::WireKind::Relay);
}

TEST_CASE("subscribed peers with one namespace find each other")
{
    Network net;
    FederationServer server(net, "home.net");
    server.add_account("alice@home.net");
    server.add_account("bob@home.net");
    server.subscribe("alice@home.net", "bob@home.net");

    auto priv_ids = make_ids(2, 81);
    auto ns = make_ids(1, 82)[0];
    auto alice = make_presence_member(net, server, "alice@home.net", priv_ids[0]);
    auto bob = make_presence_member(net, server, "bob@home.net", priv_ids[1]);

    alice.provider->announce(ns, { "udp://1.2.3.4:5" });
    net.run_until(ms(500));
    bob.provider->announce(ns, { "udp://6.7.8.9:10" });
    net.run_until(seconds(2));

    // The resource is the 40-hex ring digest, a dot, and a 16-hex nonce.
    auto res = alice.provider->resource();
    REQUIRE(res.size() == 57);
    CHECK(res.substr(0, 40) == ns.to_hex());
    CHECK(res[40] == '.');

    std::vector<PeerRecord> from_alice, from_bob;
    alice.provider->query(ns, [&](std::vector<PeerRecord> p, bool) { from_alice = std::move(p); });
    bob.provider->query(ns, [&](std::vector<PeerRecord> p, bool) { from_bob = std::move(p); });
    net.run_until(seconds(3));

    REQUIRE(from_alice.size() == 1);
    REQUIRE(from_bob.size() == 1);
    CHECK(from_alice[0].identity == bob.provider->identity());
    CHECK(from_bob[0].identity == alice.provider->identity());

    // Addresses flow on request, reflected candidates first, relay last.
    alice.provider->request_addresses();
    net.run_until(seconds(4));
    std::vector<PeerRecord> refreshed;
    alice.provider->query(ns, [&](std::vector<PeerRecord> p, bool) { refreshed = std::move(p); });
    net.run_until(seconds(5));
    REQUIRE(refreshed.size() == 1);
    REQUIRE(refreshed[0].addresses.size() == 2);
    CHECK(refreshed[0].addresses[0] == "udp://6.7.8.9:10");
    CHECK(refreshed[0].addresses[1] == bob.provider->identity());
}

TEST_CASE("two instances of one account stay distinct")
{
    Network net;
    FederationServer server(net, "home.net");
    server.add_account("alice@home.net");
    server.add_account("bob@home.net");
    server.subscribe("alice@home.net", "bob@home.net");

    auto priv_ids = make_ids(3, 83);
    auto ns = make_ids(1, 84)[0];
    auto a1 = make_presence_member(net, server, "alice@home.net", priv_ids[0]);
    auto a2 = make_presence_member(net, server, "alice@home.net", priv_ids[1]);
    auto bob = make_presence_member(net, server, "bob@home.net", priv_ids[2]);

    a1.provider->announce(ns, {});
    a2.provider->announce(ns, {});
    bob.provider->announce(ns, {});
    net.run_until(seconds(2));

    CHECK(a1.provider->resource() != a2.provider->resource());

    std::vector<PeerRecord> seen;
    bob.provider->query(ns, [&](std::vector<PeerRecord> p, bool) { seen = std::move(p); });
    net.run_until(seconds(3));
    REQUIRE(seen.size() == 2);
    std::set<std::string> identities;
    for (const auto& p : seen)
        identities.insert(p.identity);
    CHECK(identities
        == std::set<std::string> { a1.provider->identity(), a2.provider->identity() });
}

TEST_CASE("a foreign namespace is seen but never matched")
{
    Network net;
    FederationServer server(net, "home.net");
    server.add_account("alice@home.net");
    server.add_account("bob@home.net");
    server.subscribe("alice@home.net", "bob@home.net");

    auto priv_ids = make_ids(2, 85);
    auto ring_a = make_ids(1, 86)[0];
    auto ring_b = make_ids(1, 87)[0];
    auto alice = make_presence_member(net, server, "alice@home.net", priv_ids[0]);
    auto bob = make_presence_member(net, server, "bob@home.net", priv_ids[1]);

    alice.provider->announce(ring_a, {});
    bob.provider->announce(ring_b, {});
    net.run_until(seconds(2));

    // The server delivered presence both ways; the providers matched none.
    CHECK(server.stats().presence_events >= 2);
    std::size_t a_n = 99, b_n = 99;
    alice.provider->query(ring_a, [&](std::vector<PeerRecord> p, bool) { a_n = p.size(); });
    bob.provider->query(ring_b, [&](std::vector<PeerRecord> p, bool) { b_n = p.size(); });
    net.run_until(seconds(3));
    CHECK(a_n == 0);
    CHECK(b_n == 0);
}

TEST_CASE("three known peers are all asked in the first round")
{
    Network net;
    FederationServer server(net, "home.net");
    std::vector<std::string> names = { "a@home.net", "b@home.net", "c@home.net", "d@home.net" };
    for (const auto& n : names)
        server.add_account(n);
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = i + 1; j < names.size(); ++j)
            server.subscribe(names[i], names[j]);

    auto priv_ids = make_ids(4, 88);
    auto ns = make_ids(1, 89)[0];
    std::vector<PresenceMember> members;
    for (std::size_t i = 0; i < names.size(); ++i)
        members.push_back(make_presence_member(net, server, names[i], priv_ids[i]));
    for (std::size_t i = 0; i < members.size(); ++i)
        members[i].provider->announce(ns, { "udp://10.0.0." + std::to_string(i) + ":1" });
    net.run_until(seconds(2));

    int discovered = 0;
    members[0].provider->on_peer_discovered = [&](const PeerRecord& p) {
        ++discovered;
        CHECK_FALSE(p.addresses.empty());
    };
    members[0].provider->request_addresses();
    net.run_until(seconds(4));

    CHECK(members[0].provider->stats().requests_sent == 3);
    CHECK(discovered == 3);
}

TEST_CASE("six hundred known peers get at most ten requests per window")
{
    Network net;
    FederationServer server(net, "home.net");
    server.add_account("hub@home.net");
    auto priv_ids = make_ids(601, 90);
    auto ns = make_ids(1, 91)[0];

    auto hub = make_presence_member(net, server, "hub@home.net", priv_ids[600]);
    std::vector<PresenceMember> crowd;
    crowd.reserve(600);
    for (int i = 0; i < 600; ++i) {
        auto account = "p" + std::to_string(i) + "@home.net";
        server.add_account(account);
        server.subscribe("hub@home.net", account);
        crowd.push_back(make_presence_member(net, server, account, priv_ids[i]));
    }
    hub.provider->announce(ns, {});
    for (auto& m : crowd)
        m.provider->announce(ns, {});
    net.run_until(seconds(2));

    std::size_t known = 0;
    hub.provider->query(ns, [&](std::vector<PeerRecord> p, bool) { known = p.size(); });
    net.run_until(seconds(3));
    REQUIRE(known == 600);

    hub.provider->request_addresses();
    hub.provider->request_addresses(); // same window, no effect
    net.run_until(seconds(5));
    CHECK(hub.provider->stats().requests_sent == 10);

    net.run_until(seconds(3) + PresenceProvider::kRequestWindow);
    hub.provider->request_addresses();
    net.run_until(seconds(6) + PresenceProvider::kRequestWindow);
    CHECK(hub.provider->stats().requests_sent == 20);
}

TEST_CASE("two symmetric peers run their private ring purely over the relay")
{
    Network net;
    FederationServer server(net, "home.net");
    server.add_account("alice@home.net");
    server.add_account("bob@home.net");
    server.subscribe("alice@home.net", "bob@home.net");

    auto priv_ids = make_ids(2, 92);
    auto ns = make_ids(1, 93)[0];
    auto alice = make_presence_member(net, server, "alice@home.net", priv_ids[0],
        NatType::Symmetric);
    auto bob = make_presence_member(net, server, "bob@home.net", priv_ids[1],
        NatType::Symmetric);

    alice.provider->announce(ns, {});
    bob.provider->announce(ns, {});
    net.run_until(seconds(2));

    auto wa = alice.provider->relay_wire(bob.provider->identity(), priv_ids[1]);
    bob.provider->relay_wire(alice.provider->identity(), priv_ids[0]);
    bool up = false;
    alice.priv.node->dial_relay(priv_ids[1], wa, [&](bool ok, const ids::NodeId&) { up = ok; });
    net.run_until(seconds(8));
    REQUIRE(up);

    bool pinged = false;
    Time rtt = 0;
    alice.priv.node->link_ping(priv_ids[1], [&](bool ok, Time t) {
        pinged = ok;
        rtt = t;
    });
    net.run_until(seconds(12));
    REQUIRE(pinged);
    // alice -> server -> bob and back: four client legs at 25 ms each.
    CHECK(rtt == ms(100));
    CHECK(server.stats().iq_delivered >= 4);
}
