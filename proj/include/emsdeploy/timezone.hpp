#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <mutex>
#include <optional>
#include <string>

#include "emsdeploy/common.hpp"

namespace emsdeploy {

/// Civil date-time fields without a zone.
struct CivilTime {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  int hour = 0;
  int minute = 0;
  double second = 0.0;
};

/// Seconds since the epoch for a civil time read as UTC.
inline double civil_to_epoch(const CivilTime& c) {
  using namespace std::chrono;
  auto days = sys_days{year{c.year} / month{c.month} / day{c.day}}.time_since_epoch().count();
  return static_cast<double>(days) * 86400.0 + c.hour * 3600.0 + c.minute * 60.0 + c.second;
}

inline CivilTime epoch_to_civil(double t) {
  using namespace std::chrono;
  auto whole = static_cast<std::int64_t>(std::floor(t));
  std::int64_t days = whole >= 0 ? whole / 86400 : -((-whole + 86399) / 86400);
  std::int64_t sod = whole - days * 86400;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  CivilTime c;
  c.year = static_cast<int>(ymd.year());
  c.month = static_cast<unsigned>(ymd.month());
  c.day = static_cast<unsigned>(ymd.day());
  c.hour = static_cast<int>(sod / 3600);
  c.minute = static_cast<int>((sod % 3600) / 60);
  c.second = static_cast<double>(sod % 60) + (t - static_cast<double>(whole));
  return c;
}

/// ISO weekday of a local epoch value: 1 = Monday ... 7 = Sunday.
inline unsigned iso_weekday(double local_epoch) {
  using namespace std::chrono;
  auto whole = static_cast<std::int64_t>(std::floor(local_epoch));
  std::int64_t days = whole >= 0 ? whole / 86400 : -((-whole + 86399) / 86400);
  return weekday{sys_days{std::chrono::days{days}}}.iso_encoding();
}

inline double seconds_of_day(double local_epoch) {
  double d = std::floor(local_epoch / 86400.0);
  return local_epoch - d * 86400.0;
}

/// Named IANA zone backed by the system zoneinfo database, or a fixed
/// offset written as "UTC", "Z", "+hh:mm" or "-hh:mm".
class TimeZone {
 public:
  explicit TimeZone(std::string name = "UTC") : name_(std::move(name)) {
    if (name_ == "UTC" || name_ == "Z" || name_ == "Etc/UTC") {
      fixed_ = 0;
    } else if (!name_.empty() && (name_[0] == '+' || name_[0] == '-')) {
      int hh = 0, mm = 0;
      if (std::sscanf(name_.c_str() + 1, "%d:%d", &hh, &mm) != 2)
        throw ConfigError("bad fixed UTC offset: " + name_);
      fixed_ = (name_[0] == '-' ? -1 : 1) * (hh * 3600 + mm * 60);
    } else {
      std::string path = "/usr/share/zoneinfo/" + name_;
      if (std::FILE* f = std::fopen(path.c_str(), "rb")) {
        std::fclose(f);
      } else {
        throw ConfigError("unknown time zone: " + name_);
      }
    }
  }

  const std::string& name() const noexcept { return name_; }

  /// UTC offset (seconds east) in effect at a UTC instant.
  int offset_at(std::int64_t utc) const {
    if (fixed_) return *fixed_;
    std::lock_guard lock(tz_mutex());
    static std::string current;
    if (current != name_) {
      ::setenv("TZ", name_.c_str(), 1);
      ::tzset();
      current = name_;
    }
    std::time_t t = static_cast<std::time_t>(utc);
    std::tm tm{};
    ::localtime_r(&t, &tm);
    return static_cast<int>(tm.tm_gmtoff);
  }

  /// Resolves a local wall-clock epoch to UTC. Ambiguous times take the
  /// earlier instant; skipped times use the offset before the transition.
  std::int64_t to_utc(std::int64_t local, int* offset_out = nullptr) const {
    int before = offset_at(local - 86400);
    int after = offset_at(local + 86400);
    std::optional<std::int64_t> best;
    int best_off = before;
    for (int off : {before, after}) {
      std::int64_t u = local - off;
      if (offset_at(u) == off && (!best || u < *best)) {
        best = u;
        best_off = off;
      }
    }
    if (!best) best = local - before;
    if (offset_out) *offset_out = best_off;
    return *best;
  }

 private:
  static std::mutex& tz_mutex() {
    static std::mutex m;
    return m;
  }

  std::string name_;
  std::optional<int> fixed_;
};

}  // namespace emsdeploy
