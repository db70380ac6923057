#pragma once

#include <cstdint>
#include <string>

namespace ringboot::sim {

// Virtual time in integer microseconds. All scheduling math stays integral
// so runs are bit-reproducible.
using Time = std::int64_t;

constexpr Time kMicrosecond = 1;
constexpr Time kMillisecond = 1000;
constexpr Time kSecond = 1'000'000;

constexpr Time ms(std::int64_t v) { return v * kMillisecond; }
constexpr Time seconds(std::int64_t v) { return v * kSecond; }

// "12.345678" — fixed six fractional digits, no locale.
std::string format_seconds(Time t);

} // namespace ringboot::sim
