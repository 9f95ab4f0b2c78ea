#include "loadloop/core/time.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace loadloop {

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) return false;
    auto first = text.data() + pos;
    auto last = first + len;
    for (auto p = first; p != last; ++p) {
        if (*p < '0' || *p > '9') return false;
    }
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

}  // namespace

Timestamp from_civil(int year, int month, int day, int hour, int minute, int second) {
    using namespace std::chrono;
    const sys_days days{std::chrono::year{year} / std::chrono::month{static_cast<unsigned>(month)} /
                        std::chrono::day{static_cast<unsigned>(day)}};
    return static_cast<Timestamp>(days.time_since_epoch().count()) * 86400 + hour * 3600 + minute * 60 +
           second;
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '"' || text.back() == '\r'))
        text.remove_suffix(1);
    if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);

    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    if (!read_int(text, 0, 4, year) || !read_int(text, 5, 2, month) || !read_int(text, 8, 2, day))
        return std::nullopt;
    if (text.size() > 10) {
        if (text[10] != ' ' && text[10] != 'T') return std::nullopt;
        if (text.size() != 16 && text.size() != 19) return std::nullopt;
        if (text[13] != ':' || !read_int(text, 11, 2, hour) || !read_int(text, 14, 2, minute))
            return std::nullopt;
        if (text.size() == 19 && (text[16] != ':' || !read_int(text, 17, 2, second))) return std::nullopt;
    }
    if (month < 1 || month > 12 || hour > 23 || minute > 59 || second > 60) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{year} / std::chrono::month{static_cast<unsigned>(month)} /
                                          std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) return std::nullopt;
    return from_civil(year, month, day, hour, minute, second);
}

CivilTime to_civil(Timestamp ts) {
    using namespace std::chrono;
    Timestamp day_index = ts / 86400;
    Timestamp rem = ts % 86400;
    if (rem < 0) {
        rem += 86400;
        --day_index;
    }
    const sys_days days{std::chrono::days{day_index}};
    const year_month_day ymd{days};
    const weekday wd{days};
    CivilTime c;
    c.year = static_cast<int>(ymd.year());
    c.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
    c.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
    c.hour = static_cast<int>(rem / 3600);
    c.minute = static_cast<int>((rem % 3600) / 60);
    c.second = static_cast<int>(rem % 60);
    c.weekday = static_cast<int>((wd.c_encoding() + 6) % 7);
    return c;
}

std::string format_timestamp(Timestamp ts) {
    const CivilTime c = to_civil(ts);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d", c.year, c.month, c.day, c.hour, c.minute);
    return buf;
}

}  // namespace loadloop
