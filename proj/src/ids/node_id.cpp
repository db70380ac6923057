#include "ringboot/ids/node_id.hpp"

#include <algorithm>
#include <stdexcept>

namespace ringboot::ids {

NodeId NodeId::from_uint64(std::uint64_t v)
{
    Bytes b;
    b.fill(0);
    for (int i = 0; i < 8; ++i)
        b[kBytes - 1 - i] = std::uint8_t(v >> (8 * i));
    return NodeId{b};
}

namespace {

int hex_val(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

} // namespace

std::optional<NodeId> NodeId::try_from_hex(std::string_view hex)
{
    if (hex.size() != 2 * kBytes)
        return std::nullopt;
    Bytes b;
    for (std::size_t i = 0; i < kBytes; ++i) {
        int hi = hex_val(hex[2 * i]);
        int lo = hex_val(hex[2 * i + 1]);
        if (hi < 0 || lo < 0)
            return std::nullopt;
        b[i] = std::uint8_t(hi << 4 | lo);
    }
    return NodeId{b};
}

NodeId NodeId::from_hex(std::string_view hex)
{
    auto id = try_from_hex(hex);
    if (!id)
        throw std::invalid_argument("node id must be 40 hex digits");
    return *id;
}

bool NodeId::is_zero() const
{
    return std::all_of(bytes_.begin(), bytes_.end(), [](std::uint8_t b) { return b == 0; });
}

std::string NodeId::to_hex() const
{
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(2 * kBytes);
    for (std::uint8_t b : bytes_) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

NodeId NodeId::add(const NodeId& other) const
{
    Bytes r;
    unsigned carry = 0;
    for (int i = int(kBytes) - 1; i >= 0; --i) {
        unsigned s = unsigned(bytes_[i]) + unsigned(other.bytes_[i]) + carry;
        r[i] = std::uint8_t(s & 0xFF);
        carry = s >> 8;
    }
    return NodeId{r};
}

NodeId NodeId::sub(const NodeId& other) const
{
    Bytes r;
    int borrow = 0;
    for (int i = int(kBytes) - 1; i >= 0; --i) {
        int d = int(bytes_[i]) - int(other.bytes_[i]) - borrow;
        borrow = d < 0 ? 1 : 0;
        r[i] = std::uint8_t(d & 0xFF);
    }
    return NodeId{r};
}

NodeId ring_distance(const NodeId& a, const NodeId& b)
{
    NodeId cw = a.distance_cw(b);
    NodeId ccw = b.distance_cw(a);
    return cw < ccw ? cw : ccw;
}

bool closer_to(const NodeId& target, const NodeId& candidate, const NodeId& incumbent)
{
    NodeId dc = ring_distance(target, candidate);
    NodeId di = ring_distance(target, incumbent);
    if (dc != di)
        return dc < di;
    return candidate < incumbent;
}

} // namespace ringboot::ids
