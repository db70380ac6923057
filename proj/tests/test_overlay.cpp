#include "ring_fixture.hpp"

TEST_CASE("three-way handshake links two nodes both ways")
{
    Network net;
    auto ids = make_ids(2, 1);
    auto a = make_peer(net, ids[0]);
    auto b = make_peer(net, ids[1]);

    int a_up = 0;
    int b_up = 0;
    a.node->on_link_up = [&](const ids::NodeId&, const Link&) { ++a_up; };
    b.node->on_link_up = [&](const ids::NodeId&, const Link&) { ++b_up; };

    bool cb_up = false;
    a.node->dial(b.id(), { b.local() }, false, [&](bool up, const ids::NodeId& peer) {
        cb_up = up;
        CHECK(peer == b.id());
    });
    net.run_until(seconds(1));

    CHECK(cb_up);
    CHECK(a_up == 1);
    CHECK(b_up == 1);
    REQUIRE(a.node->link(b.id()));
    REQUIRE(b.node->link(a.id()));
    CHECK(a.node->link(b.id())->up());
    CHECK(b.node->link(a.id())->up());
    CHECK(a.node->link(b.id())->wire.kind == WireKind::Direct);
    CHECK(a.node->link(b.id())->wire.direct == b.local());
    CHECK(b.node->link(a.id())->wire.direct == a.local());
    // Both sides observed each other's true source.
    CHECK(a.node->link(b.id())->observed_self == a.local());
    CHECK(b.node->link(a.id())->observed_self == b.local());
}

TEST_CASE("simultaneous dials collapse to a single link per side")
{
    Network net;
    auto ids = make_ids(2, 2);
    auto a = make_peer(net, ids[0]);
    auto b = make_peer(net, ids[1]);

    int a_up = 0;
    int b_up = 0;
    a.node->on_link_up = [&](const ids::NodeId&, const Link&) { ++a_up; };
    b.node->on_link_up = [&](const ids::NodeId&, const Link&) { ++b_up; };

    bool a_done = false;
    bool b_done = false;
    a.node->dial(b.id(), { b.local() }, true, [&](bool up, const ids::NodeId&) { a_done = up; });
    b.node->dial(a.id(), { a.local() }, true, [&](bool up, const ids::NodeId&) { b_done = up; });
    net.run_until(seconds(2));

    CHECK(a_done);
    CHECK(b_done);
    CHECK(a_up == 1);
    CHECK(b_up == 1);
    CHECK(a.node->links().size() == 1);
    CHECK(b.node->links().size() == 1);
    CHECK(a.node->link(b.id())->up());
    CHECK(b.node->link(a.id())->up());
}

TEST_CASE("handshake reports the translated source to a natted dialer")
{
    Network net;
    auto ids = make_ids(2, 3);
    auto a = make_peer(net, ids[0]); // public responder
    auto b = make_peer(net, ids[1], NatType::PortRestrictedCone);

    bool up = false;
    b.node->dial(a.id(), { a.local() }, false, [&](bool ok, const ids::NodeId&) { up = ok; });
    net.run_until(seconds(1));
    REQUIRE(up);

    auto nat_id = net.host_nat(b.host);
    REQUIRE(nat_id);
    auto expected = net.nat(*nat_id).external_for(b.local(), a.local(), net.now());
    REQUIRE(expected);

    // The dialer learned its reflection; the responder saw the same endpoint.
    REQUIRE(b.node->reflected());
    CHECK(*b.node->reflected() == *expected);
    CHECK(b.node->link(a.id())->observed_self == *expected);
    CHECK(a.node->link(b.id())->observed_remote == *expected);

    // The natted side advertises the reflected endpoint ahead of the private one.
    auto advertised = b.node->advertised_address_strings();
    REQUIRE(advertised.size() == 3);
    CHECK(advertised[0] == "udp://" + expected->to_string());
    CHECK(advertised[1] == "udp://" + b.local().to_string());
}

TEST_CASE("sequential joins converge to the true nearest neighbor sets")
{
    auto r = make_ring(32);
    CHECK(near_sets_match(r, r.all_ids));

    // Convergence is monotone: another minute changes nothing.
    r.net.run_until(r.converged_at + seconds(60));
    CHECK(near_sets_match(r, r.all_ids));
}

TEST_CASE("greedy routing delivers at the globally closest node")
{
    auto r = make_ring(16);

    std::map<std::uint64_t, std::vector<ids::NodeId>> deliveries;
    for (auto& p : r.peers) {
        p.node->set_proto_handler(Proto::App,
            [&deliveries, id = p.id()](const RoutedPacket& packet, const ids::NodeId&) {
                std::uint64_t marker = 0;
                for (int i = 0; i < 8; ++i)
                    marker = marker << 8 | packet.payload[std::size_t(i)];
                deliveries[marker].push_back(id);
            });
    }

    std::mt19937_64 rng(99);
    std::vector<std::pair<std::uint64_t, ids::NodeId>> expected;
    for (std::uint64_t marker = 0; marker < 48; ++marker) {
        auto target = ids::NodeId::random(rng);
        auto& from = r.peers[std::size_t(marker) % r.peers.size()];
        std::vector<std::uint8_t> payload(8);
        for (int i = 0; i < 8; ++i)
            payload[std::size_t(i)] = std::uint8_t(marker >> (56 - 8 * i));
        CHECK(from.node->route(target, RouteMode::Closest, Proto::App, payload));
        expected.push_back({ marker, oracle_owner(target, r.all_ids) });
    }
    r.net.run_until(r.net.now() + seconds(5));

    for (const auto& [marker, owner] : expected) {
        REQUIRE(deliveries.count(marker) == 1);
        CHECK(deliveries[marker].size() == 1);
        CHECK(deliveries[marker].front() == owner);
    }
}

TEST_CASE("exact routing delivers only at the exact owner")
{
    auto r = make_ring(12);

    int hits = 0;
    for (auto& p : r.peers) {
        p.node->set_proto_handler(Proto::App,
            [&hits, id = p.id()](const RoutedPacket& packet, const ids::NodeId&) {
                ++hits;
                CHECK(packet.dst == id);
            });
    }

    auto misses_before = [&] {
        std::uint64_t total = 0;
        for (const auto& p : r.peers)
            total += p.node->stats().exact_misses;
        return total;
    }();

    // A real member id lands exactly there.
    r.peers[2].node->route(r.peers[9].id(), RouteMode::Exact, Proto::App,
        std::vector<std::uint8_t> { 1 });
    r.net.run_until(r.net.now() + seconds(2));
    CHECK(hits == 1);

    // A vacant id is a counted miss at whichever node is closest, never a delivery.
    std::mt19937_64 rng(123);
    auto vacant = ids::NodeId::random(rng);
    bool is_member = std::find(r.all_ids.begin(), r.all_ids.end(), vacant) != r.all_ids.end();
    REQUIRE(!is_member);
    r.peers[4].node->route(vacant, RouteMode::Exact, Proto::App, std::vector<std::uint8_t> { 2 });
    r.net.run_until(r.net.now() + seconds(2));
    CHECK(hits == 1);

    std::uint64_t misses_after = 0;
    for (const auto& p : r.peers)
        misses_after += p.node->stats().exact_misses;
    CHECK(misses_after == misses_before + 1);
}

TEST_CASE("a connect request detours around its requester and both ends link")
{
    auto r = make_ring(16);

    // Pick ring-opposite members so they are guaranteed strangers.
    auto sorted = r.all_ids;
    std::sort(sorted.begin(), sorted.end());
    auto& x = r.by_id(sorted[0]);
    auto& y = r.by_id(sorted[sorted.size() / 2]);
    REQUIRE(!(x.node->link(y.id()) && x.node->link(y.id())->up()));

    x.node->connect_to_me(y.id());
    r.net.run_until(r.net.now() + seconds(5));

    REQUIRE(x.node->link(y.id()));
    CHECK(x.node->link(y.id())->up());
    REQUIRE(y.node->link(x.id()));
    CHECK(y.node->link(x.id())->up());
}

TEST_CASE("a connect request with no route anywhere is a counted drop")
{
    Network net;
    auto ids = make_ids(1, 5);
    auto solo = make_peer(net, ids[0]);
    solo.node->connect_to_me(solo.id());
    CHECK(solo.node->stats().no_route_drops == 1);
    CHECK(solo.node->stats().delivered == 0);
}

TEST_CASE("tunnel via a common neighbor measures the sum of both hop latencies")
{
    Network net;
    auto ids = make_ids(3, 4);
    auto a = make_peer(net, ids[0]);
    auto b = make_peer(net, ids[1]);
    auto c = make_peer(net, ids[2]);

    net.set_link_latency(a.host, c.host, ms(30));
    net.set_link_latency(b.host, c.host, ms(45));

    a.node->dial(c.id(), { c.local() }, false);
    b.node->dial(c.id(), { c.local() }, false);
    net.run_until(seconds(1));
    REQUIRE(a.node->link(c.id())->up());
    REQUIRE(b.node->link(c.id())->up());

    bool up = false;
    a.node->dial_tunnel(b.id(), c.id(), [&](bool ok, const ids::NodeId&) { up = ok; });
    net.run_until(seconds(2));
    REQUIRE(up);
    REQUIRE(a.node->link(b.id()));
    CHECK(a.node->link(b.id())->state == LinkState::Tunneled);
    CHECK(a.node->link(b.id())->wire.kind == WireKind::Tunnel);
    CHECK(a.node->link(b.id())->wire.forwarder == c.id());
    REQUIRE(b.node->link(a.id()));
    CHECK(b.node->link(a.id())->state == LinkState::Tunneled);

    // a->c->b and back: 2 * (30 + 45) ms, exactly.
    Time rtt = 0;
    bool pinged = false;
    a.node->link_ping(b.id(), [&](bool ok, Time t) {
        pinged = ok;
        rtt = t;
    });
    net.run_until(seconds(3));
    REQUIRE(pinged);
    CHECK(rtt == ms(150));
    CHECK(c.node->stats().tunnel_forwards >= 4);
}

TEST_CASE("graceful departure is repaired within two stabilization periods")
{
    auto r = make_ring(8);
    REQUIRE(near_sets_match(r, r.all_ids));

    auto sorted = r.all_ids;
    std::sort(sorted.begin(), sorted.end());
    auto victim = sorted[3];
    auto left = sorted[2];
    auto right = sorted[4];

    auto t0 = r.net.now();
    r.by_id(victim).node->leave();

    std::vector<ids::NodeId> remaining;
    for (const auto& id : r.all_ids)
        if (!(id == victim))
            remaining.push_back(id);

    auto period = r.by_id(left).node->config().stabilize_period;
    r.net.run_until(t0 + 2 * period + ms(500));

    auto& l = r.by_id(left);
    auto& rr = r.by_id(right);
    REQUIRE(!l.node->near_right().empty());
    REQUIRE(!rr.node->near_left().empty());
    CHECK(l.node->near_right().front() == right);
    CHECK(rr.node->near_left().front() == left);
    CHECK(l.node->near_right() == oracle_side(left, remaining, 2, true));
    CHECK(rr.node->near_left() == oracle_side(right, remaining, 2, false));
}

TEST_CASE("unresponsive peer is pruned after three missed pings")
{
    Network net;
    auto ids = make_ids(2, 6);
    auto a = make_peer(net, ids[0]);
    auto b = make_peer(net, ids[1]);
    a.node->start();
    b.node->start();

    a.node->dial(b.id(), { b.local() }, false);
    net.run_until(seconds(1));
    REQUIRE(a.node->link(b.id())->up());

    bool down = false;
    a.node->on_link_down = [&](const ids::NodeId& peer) { down = peer == b.id(); };

    // Crash-stop: b vanishes without a close.
    b.transport->sink = [](const Datagram&) {};
    b.node->halt();

    // Ping rounds at 15/30/45 s accumulate the misses; the 60 s round prunes.
    net.run_until(seconds(59));
    REQUIRE(a.node->link(b.id()));
    CHECK(a.node->link(b.id())->up());
    CHECK(!down);
    net.run_until(seconds(62));
    CHECK(down);
    const auto* l = a.node->link(b.id());
    CHECK((l == nullptr || !l->up()));
}

TEST_CASE("non-punch dial gives up after its retries")
{
    Network net;
    auto ids = make_ids(1, 8);
    auto a = make_peer(net, ids[0]);

    bool called = false;
    Time finished = 0;
    // Routable address, nobody home.
    a.node->dial(ids::NodeId::from_uint64(42), { Endpoint { 0x08020202, 4000 } }, false,
        [&](bool up, const ids::NodeId&) {
            called = true;
            finished = net.now();
            CHECK(!up);
        });
    net.run_until(seconds(30));
    CHECK(called);
    // Three attempts, five seconds apart.
    CHECK(finished == seconds(15));
}
