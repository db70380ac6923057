#include "ringboot/sim/trace.hpp"

#include <stdexcept>

namespace ringboot::sim {

void TraceLog::open_file(const std::string& path)
{
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*file_)
        throw std::runtime_error("cannot open trace file: " + path);
}

void TraceLog::record(Time t, std::string_view kind, std::string_view src, std::string_view dst,
    std::size_t bytes, std::string_view verdict)
{
    std::string line;
    line.reserve(64);
    line += format_seconds(t);
    line += '|';
    line += kind;
    line += '|';
    line += src;
    line += '|';
    line += dst;
    line += '|';
    line += std::to_string(bytes);
    line += '|';
    line += verdict;
    line += '\n';

    hasher_.update(line);
    ++count_;
    if (file_)
        *file_ << line;
    if (mode_ == Mode::Keep) {
        line.pop_back();
        lines_.push_back(std::move(line));
    }
}

std::string TraceLog::fingerprint() const
{
    Sha1 copy = hasher_;
    auto digest = copy.finish();
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(40);
    for (auto b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xF]);
    }
    return out;
}

} // namespace ringboot::sim
