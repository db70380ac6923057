#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace ringboot::ids {

// 160-bit ring identifier. Stored big-endian so lexicographic byte order
// equals numeric order. All arithmetic is modulo 2^160.
class NodeId {
public:
    static constexpr std::size_t kBytes = 20;
    using Bytes = std::array<std::uint8_t, kBytes>;

    NodeId() { bytes_.fill(0); }
    explicit NodeId(const Bytes& b) : bytes_(b) {}

    static NodeId from_uint64(std::uint64_t v);
    // Parses exactly 40 lowercase or uppercase hex digits; throws on anything else.
    static NodeId from_hex(std::string_view hex);
    static std::optional<NodeId> try_from_hex(std::string_view hex);
    // Uniform draw from the full 160-bit space.
    template <class Rng>
    static NodeId random(Rng& rng)
    {
        Bytes b;
        for (std::size_t i = 0; i < kBytes; i += 8) {
            std::uint64_t v = rng();
            for (std::size_t j = 0; j < 8 && i + j < kBytes; ++j)
                b[i + j] = std::uint8_t(v >> (8 * j));
        }
        return NodeId{b};
    }

    const Bytes& bytes() const { return bytes_; }
    bool is_zero() const;

    // Canonical text form: 40 lowercase hex digits, zero padded.
    std::string to_hex() const;

    NodeId add(const NodeId& other) const;
    NodeId sub(const NodeId& other) const;

    // Clockwise distance from *this to other: (other - this) mod 2^160.
    NodeId distance_cw(const NodeId& other) const { return other.sub(*this); }

    friend auto operator<=>(const NodeId& a, const NodeId& b) = default;

private:
    Bytes bytes_;
};

// min(|a-b|, 2^160 - |a-b|); symmetric.
NodeId ring_distance(const NodeId& a, const NodeId& b);

// True when candidate is strictly closer to target than incumbent, with ties
// broken towards the numerically lower id. Shared by routing and the
// DHT placement rule so both pick the same owner.
bool closer_to(const NodeId& target, const NodeId& candidate, const NodeId& incumbent);

} // namespace ringboot::ids
