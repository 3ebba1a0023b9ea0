#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <optional>

namespace engage {

/// Wall-clock instant at minute resolution.
using Minutes = std::chrono::sys_time<std::chrono::minutes>;
using Days = std::chrono::sys_days;

/// Accepts "YYYY-MM-DD HH:MM[:SS]", "YYYY-MM-DDTHH:MM[:SS]" and the Moodle
/// export form "D/M/YY, HH:MM". Seconds are truncated.
std::optional<Minutes> parse_timestamp(std::string_view text);

/// "YYYY-MM-DD HH:MM".
std::string format_timestamp(Minutes t);

std::optional<Days> parse_date(std::string_view text);
std::string format_date(Days d);

/// Whole days from `origin` to the calendar day of `t` (may be negative).
std::int64_t day_offset(Days origin, Minutes t);

}  // namespace engage
