#pragma once

#include "ringboot/ids/node_id.hpp"
#include "ringboot/overlay/node.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace ringboot::dht {

using sim::Time;
using sim::seconds;

constexpr std::size_t kMaxValueBytes = 1024;
constexpr std::size_t kMaxValuesPerKey = 32;
constexpr Time kMinTtl = seconds(1);
constexpr Time kMaxTtl = seconds(3600);
constexpr Time kSweepPeriod = seconds(1);
constexpr Time kRpcTimeout = seconds(10);
constexpr int kRpcRetries = 2;

using Value = std::vector<std::uint8_t>;

// Soft-state lease: nothing survives past its expiry plus one sweep.
struct LeaseEntry {
    ids::NodeId key;
    Value value;
    Time expires_at = 0;
    ids::NodeId origin;
};

// Multi-value map; duplicate (key, value) pairs collapse to the later expiry.
class LeaseStore {
public:
    // Returns true when a new entry was created (false: lease extended).
    bool put(const ids::NodeId& key, Value value, Time expires_at, const ids::NodeId& origin);
    std::vector<Value> get(const ids::NodeId& key, Time now) const;
    std::size_t sweep(Time now); // removes entries with expires_at <= now
    const std::vector<LeaseEntry>* entries(const ids::NodeId& key) const;
    std::size_t size() const;

private:
    std::map<ids::NodeId, std::vector<LeaseEntry>> by_key_;
};

enum class RpcKind : std::uint8_t { Put = 1, Get = 2, PutAck = 3, GetReply = 4 };

struct DhtRpc {
    RpcKind kind = RpcKind::Put;
    std::uint32_t token = 0;
    ids::NodeId origin; // replies are routed exact back here
    ids::NodeId key;
    std::uint32_t ttl_s = 0;        // Put
    Value value;                    // Put
    std::vector<Value> values;      // GetReply
};

std::vector<std::uint8_t> encode_rpc(const DhtRpc& rpc);
std::optional<DhtRpc> decode_rpc(std::span<const std::uint8_t> data);

// Key/value service attached to one overlay node. Storage requests land on
// whichever node greedy routing says is closest to the key; acks and replies
// travel back exact to the origin.
class DhtNode {
public:
    using PutCallback = std::function<void(bool ok)>;
    // ok=false flags an indeterminate result (timeout), distinct from a
    // definitive empty answer.
    using GetCallback = std::function<void(std::vector<Value> values, bool ok)>;

    DhtNode(sim::Network& net, overlay::OverlayNode& node);
    ~DhtNode();

    void start(); // arms the expiry sweep
    void stop();

    // ttl_s in [1, 3600], value <= 1 KiB; violations throw.
    void put(const ids::NodeId& key, Value value, std::uint32_t ttl_s, PutCallback cb = {});
    void get(const ids::NodeId& key, GetCallback cb);

    // Re-puts every ttl/2 so the entry outlives churn; returns a handle.
    std::uint32_t maintain(const ids::NodeId& key, Value value, std::uint32_t ttl_s);
    void cancel(std::uint32_t handle);

    std::size_t expire_sweep(); // one sweep now; returns removed count
    const LeaseStore& store() const { return store_; }

private:
    struct Pending {
        RpcKind kind = RpcKind::Put;
        ids::NodeId key;
        Value value;
        std::uint32_t ttl_s = 0;
        int attempts_left = 0;
        std::uint64_t timer = 0;
        PutCallback put_cb;
        GetCallback get_cb;
    };

    struct Maintained {
        ids::NodeId key;
        Value value;
        std::uint32_t ttl_s = 0;
        std::uint64_t timer = 0;
    };

    void handle_rpc(const overlay::RoutedPacket& packet);
    void send_request(std::uint32_t token);
    void fail_request(std::uint32_t token);
    std::uint32_t next_token();

    sim::Network& net_;
    overlay::OverlayNode& node_;
    LeaseStore store_;
    std::map<std::uint32_t, Pending> pending_;
    std::map<std::uint32_t, Maintained> maintained_;
    std::uint64_t sweep_timer_ = 0;
    bool running_ = false;
    std::uint32_t next_handle_ = 1;
};

} // namespace ringboot::dht
