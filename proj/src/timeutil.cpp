#include "engage/timeutil.hpp"

#include <charconv>
#include <cstdio>

namespace engage {
namespace {

bool read_int(std::string_view& s, int& out, std::size_t min_digits, std::size_t max_digits) {
  std::size_t n = 0;
  while (n < s.size() && n < max_digits && s[n] >= '0' && s[n] <= '9') ++n;
  if (n < min_digits) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + n, out);
  if (ec != std::errc{}) return false;
  s.remove_prefix(n);
  return true;
}

bool expect(std::string_view& s, char c) {
  if (s.empty() || s.front() != c) return false;
  s.remove_prefix(1);
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<Minutes> make(int y, int mo, int d, int h, int mi) {
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59) return std::nullopt;
  return Minutes{sys_days{ymd}} + hours{h} + minutes{mi};
}

std::optional<Minutes> parse_iso(std::string_view s) {
  int y, mo, d, h, mi, sec = 0;
  if (!read_int(s, y, 4, 4) || !expect(s, '-') || !read_int(s, mo, 1, 2) || !expect(s, '-') ||
      !read_int(s, d, 1, 2))
    return std::nullopt;
  if (s.empty() || (s.front() != ' ' && s.front() != 'T')) return std::nullopt;
  s.remove_prefix(1);
  if (!read_int(s, h, 1, 2) || !expect(s, ':') || !read_int(s, mi, 2, 2)) return std::nullopt;
  if (!s.empty()) {
    if (!expect(s, ':') || !read_int(s, sec, 2, 2) || sec > 60 || !s.empty()) return std::nullopt;
  }
  return make(y, mo, d, h, mi);
}

std::optional<Minutes> parse_moodle(std::string_view s) {
  int d, mo, y, h, mi;
  if (!read_int(s, d, 1, 2) || !expect(s, '/') || !read_int(s, mo, 1, 2) || !expect(s, '/') ||
      !read_int(s, y, 2, 4))
    return std::nullopt;
  if (y < 100) y += 2000;
  if (!expect(s, ',')) return std::nullopt;
  s = trim(s);
  if (!read_int(s, h, 1, 2) || !expect(s, ':') || !read_int(s, mi, 2, 2) || !s.empty())
    return std::nullopt;
  return make(y, mo, d, h, mi);
}

}  // namespace

std::optional<Minutes> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.size() >= 5 && text[4] == '-') return parse_iso(text);
  return parse_moodle(text);
}

std::string format_timestamp(Minutes t) {
  using namespace std::chrono;
  auto day = floor<days>(t);
  year_month_day ymd{day};
  hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02ld:%02ld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()));
  return buf;
}

std::optional<Days> parse_date(std::string_view text) {
  text = trim(text);
  int y, mo, d;
  if (!read_int(text, y, 4, 4) || !expect(text, '-') || !read_int(text, mo, 1, 2) ||
      !expect(text, '-') || !read_int(text, d, 1, 2) || !text.empty())
    return std::nullopt;
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

std::string format_date(Days d) {
  using namespace std::chrono;
  year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::int64_t day_offset(Days origin, Minutes t) {
  auto day = std::chrono::floor<std::chrono::days>(t);
  return (day - origin).count();
}

}  // namespace engage
