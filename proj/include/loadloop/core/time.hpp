#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace loadloop {

// Seconds since the Unix epoch, UTC. Inputs carry no zone information.
using Timestamp = std::int64_t;

inline constexpr Timestamp kSecondsPerHour = 3600;

struct CivilTime {
    int year = 1970;
    int month = 1;   // 1..12
    int day = 1;     // 1..31
    int hour = 0;
    int minute = 0;
    int second = 0;
    int weekday = 3;  // 0 = Monday .. 6 = Sunday
};

// Accepts "YYYY-MM-DD HH:MM[:SS]", "YYYY-MM-DDTHH:MM[:SS][Z]" and "YYYY-MM-DD".
std::optional<Timestamp> parse_timestamp(std::string_view text);

// "YYYY-MM-DD HH:MM"
std::string format_timestamp(Timestamp ts);

CivilTime to_civil(Timestamp ts);

Timestamp from_civil(int year, int month, int day, int hour = 0, int minute = 0, int second = 0);

inline Timestamp floor_to_hour(Timestamp ts) {
    Timestamp r = ts % kSecondsPerHour;
    if (r < 0) r += kSecondsPerHour;
    return ts - r;
}

}  // namespace loadloop
