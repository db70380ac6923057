#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string_view>

namespace ringboot {

// SHA-1 (RFC 3174). Used for 160-bit ring identifiers and namespace keys,
// and for hashing event traces into run fingerprints.
class Sha1 {
public:
    using Digest = std::array<std::uint8_t, 20>;

    Sha1() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);
    void update(std::string_view s) { update(s.data(), s.size()); }
    Digest finish();

    static Digest hash(std::string_view s)
    {
        Sha1 h;
        h.update(s);
        return h.finish();
    }

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[5];
    std::uint64_t total_len_ = 0;
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

} // namespace ringboot
