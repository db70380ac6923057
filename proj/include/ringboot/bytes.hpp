#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ringboot {

// Big-endian primitive writer shared by every frame codec.
class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v)
    {
        out_.push_back(std::uint8_t(v >> 8));
        out_.push_back(std::uint8_t(v));
    }
    void u32(std::uint32_t v)
    {
        u16(std::uint16_t(v >> 16));
        u16(std::uint16_t(v));
    }
    void u64(std::uint64_t v)
    {
        u32(std::uint32_t(v >> 32));
        u32(std::uint32_t(v));
    }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void bytes(const void* p, std::size_t n)
    {
        auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    // u16 length prefix + raw bytes.
    void str(std::string_view s)
    {
        u16(std::uint16_t(s.size()));
        bytes(s.data(), s.size());
    }

    std::vector<std::uint8_t> take() { return std::move(out_); }
    const std::vector<std::uint8_t>& data() const { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

// Bounds-checked reader; any failed read poisons the reader.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return ok_ && pos_ < in_.size() ? in_[pos_++] : fail8(); }
    std::uint16_t u16()
    {
        std::uint16_t hi = u8();
        return std::uint16_t(hi << 8 | u8());
    }
    std::uint32_t u32()
    {
        std::uint32_t hi = u16();
        return hi << 16 | u16();
    }
    std::uint64_t u64()
    {
        std::uint64_t hi = u32();
        return hi << 32 | u32();
    }
    bool bytes(void* dst, std::size_t n)
    {
        if (!ok_ || in_.size() - pos_ < n) {
            ok_ = false;
            return false;
        }
        std::memcpy(dst, in_.data() + pos_, n);
        pos_ += n;
        return true;
    }
    std::string str()
    {
        std::uint16_t n = u16();
        if (!ok_ || in_.size() - pos_ < n) {
            ok_ = false;
            return {};
        }
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::span<const std::uint8_t> rest()
    {
        auto r = in_.subspan(pos_);
        pos_ = in_.size();
        return r;
    }

    bool ok() const { return ok_; }
    bool done() const { return ok_ && pos_ == in_.size(); }
    std::size_t remaining() const { return ok_ ? in_.size() - pos_ : 0; }

private:
    std::uint8_t fail8()
    {
        ok_ = false;
        return 0;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    bool ok_ = true;
};

} // namespace ringboot
