#pragma once

#include "ringboot/sha1.hpp"
#include "ringboot/sim/time.hpp"

#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace ringboot::sim {

// Newline-delimited records: time|event-kind|src|dst|bytes|verdict
//
// Kinds and field meanings:
//   send    src = original (pre-NAT) source endpoint, dst = addressed dst
//   xlate   src = internal endpoint, dst = external binding endpoint
//   deliver src = wire source seen by the receiver, dst = delivery endpoint
//   drop    src = wire source, dst = addressed destination
//   phase   src = peer label, dst = phase name
class TraceLog {
public:
    enum class Mode {
        HashOnly, // stream records into the fingerprint, keep nothing
        Keep,     // also retain lines in memory for replay-style oracles
    };

    explicit TraceLog(Mode mode = Mode::HashOnly) : mode_(mode) {}

    void set_mode(Mode m) { mode_ = m; }
    // Mirrors every record into a file as it is produced.
    void open_file(const std::string& path);

    void record(Time t, std::string_view kind, std::string_view src, std::string_view dst,
        std::size_t bytes, std::string_view verdict);

    // Hex SHA-1 over all record lines emitted so far.
    std::string fingerprint() const;

    const std::vector<std::string>& lines() const { return lines_; }
    std::size_t record_count() const { return count_; }

private:
    Mode mode_;
    Sha1 hasher_;
    std::size_t count_ = 0;
    std::vector<std::string> lines_;
    std::unique_ptr<std::ofstream> file_;
};

} // namespace ringboot::sim
