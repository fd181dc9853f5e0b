#include "modelmon/time.hpp"

#include <charconv>
#include <cstdio>

#include "modelmon/errors.hpp"

namespace modelmon {

namespace {

using namespace std::chrono;

class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  int digits(std::size_t count, const char* what) {
    if (pos_ + count > text_.size()) fail(what);
    int value = 0;
    const auto* first = text_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(first, first + count, value);
    if (ec != std::errc{} || ptr != first + count) fail(what);
    pos_ += count;
    return value;
  }

  bool accept(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c, const char* what) {
    if (!accept(c)) fail(what);
  }

  bool accept_one_of(std::string_view chars, char& which) {
    if (pos_ < text_.size() && chars.find(text_[pos_]) != std::string_view::npos) {
      which = text_[pos_++];
      return true;
    }
    return false;
  }

  int fraction_millis() {
    const std::size_t start = pos_;
    int millis = 0;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
      if (pos_ - start < 3) millis = millis * 10 + (text_[pos_] - '0');
      ++pos_;
    }
    if (pos_ == start) fail("fraction");
    for (std::size_t i = pos_ - start; i < 3; ++i) millis *= 10;
    return millis;
  }

  [[nodiscard]] bool done() const { return pos_ == text_.size(); }

  [[noreturn]] void fail(const char* what) const {
    throw ParseError("timestamp '" + std::string(text_) + "': bad " + what);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

UtcTime parse_utc(std::string_view text) {
  Cursor c(text);
  const int y = c.digits(4, "year");
  c.expect('-', "date separator");
  const int mo = c.digits(2, "month");
  c.expect('-', "date separator");
  const int d = c.digits(2, "day");
  char sep = 0;
  if (!c.accept_one_of("Tt ", sep)) c.fail("date/time separator");
  const int hh = c.digits(2, "hour");
  c.expect(':', "time separator");
  const int mi = c.digits(2, "minute");
  int ss = 0;
  int ms = 0;
  if (c.accept(':')) {
    ss = c.digits(2, "second");
    if (c.accept('.')) ms = c.fraction_millis();
  }
  minutes offset{0};
  char zone = 0;
  if (c.accept_one_of("Zz", zone)) {
  } else if (c.accept_one_of("+-", zone)) {
    const int oh = c.digits(2, "offset hour");
    c.expect(':', "offset separator");
    const int om = c.digits(2, "offset minute");
    offset = minutes{(oh * 60 + om) * (zone == '-' ? -1 : 1)};
  } else {
    c.fail("time zone (RFC 3339 requires Z or an offset)");
  }
  if (!c.done()) c.fail("trailing characters");

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) c.fail("calendar date");
  if (hh > 23 || mi > 59 || ss > 60) c.fail("time of day");
  const auto local = sys_days{ymd} + hours{hh} + minutes{mi} + seconds{ss} + milliseconds{ms};
  return time_point_cast<milliseconds>(local - offset);
}

std::string format_utc(UtcTime t, bool always_millis) {
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss<milliseconds> tod{t - day_point};
  char buf[40];
  const auto ms = tod.subseconds().count();
  if (always_millis || ms != 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                  static_cast<long>(tod.seconds().count()), static_cast<long>(ms));
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                  static_cast<long>(tod.seconds().count()));
  }
  return buf;
}

std::string partition_path(UtcTime t) {
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const auto hour = floor<hours>(t - day_point).count();
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d/%02u/%02u/%02ld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<long>(hour));
  return buf;
}

UtcTime floor_hour(UtcTime t) { return time_point_cast<milliseconds>(floor<hours>(t)); }

std::int64_t epoch_millis(UtcTime t) { return t.time_since_epoch().count(); }

UtcTime utc_now() { return time_point_cast<milliseconds>(system_clock::now()); }

}  // namespace modelmon
