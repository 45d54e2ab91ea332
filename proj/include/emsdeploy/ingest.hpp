#pragma once

#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "emsdeploy/common.hpp"
#include "emsdeploy/geogrid.hpp"
#include "emsdeploy/timezone.hpp"

namespace emsdeploy {

struct CallRecord {
  double timestamp = 0.0;  // seconds since epoch, UTC
  int utc_offset_s = 0;    // local offset at the call, for calendar rules
  double lat = 0.0;
  double lon = 0.0;
  std::optional<double> reported_response_s;
  std::optional<double> reported_travel_s;
  std::optional<double> ambulance_lat;
  std::optional<double> ambulance_lon;
  std::optional<double> on_scene_s;
  std::optional<double> to_hospital_s;

  double local_time() const noexcept { return timestamp + utc_offset_s; }
  friend bool operator==(const CallRecord&, const CallRecord&) = default;
};

/// Column names of the call-log CSV plus timestamp interpretation.
struct CallSchema {
  std::string datetime = "datetime";
  std::string latitude = "latitude";
  std::string longitude = "longitude";
  std::string response_time = "response_time_s";
  std::string travel_time = "travel_time_s";
  std::string amb_latitude = "amb_latitude";
  std::string amb_longitude = "amb_longitude";
  std::string on_scene = "on_scene_s";
  std::string to_hospital = "to_hospital_s";
  std::string zone = "UTC";
  std::string timestamp_format;  // strptime format; empty means ISO-8601
};

struct ParsedCalls {
  std::vector<CallRecord> calls;
  std::size_t dropped = 0;
  std::vector<std::string> drop_reasons;  // "line N: reason"
};

// ---------------------------------------------------------------------------
// Timestamps

/// Parses `YYYY-MM-DD[T ]HH:MM[:SS[.fff]]` with an optional `Z`/`±HH:MM`
/// suffix. Without a suffix the time is local to `zone`.
inline std::optional<CallRecord> parse_iso_timestamp(std::string_view text, const TimeZone& zone) {
  text = trim(text);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  std::size_t pos = 0;
  auto read_int = [&](int digits, int& out) {
    if (pos + static_cast<std::size_t>(digits) > text.size()) return false;
    return parse_int(text.substr(pos, digits), out) && (pos += digits, true);
  };
  auto expect = [&](char c) { return pos < text.size() && text[pos] == c && (++pos, true); };
  if (!read_int(4, y) || !expect('-') || !read_int(2, mo) || !expect('-') || !read_int(2, d)) return std::nullopt;
  if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
    ++pos;
    if (!read_int(2, h) || !expect(':') || !read_int(2, mi)) return std::nullopt;
    if (expect(':')) {
      std::size_t start = pos;
      while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.')) ++pos;
      if (!parse_double(text.substr(start, pos - start), sec)) return std::nullopt;
    }
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec < 0.0 || sec >= 61.0) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y} / std::chrono::month{static_cast<unsigned>(mo)} /
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  CivilTime civil{y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, sec};
  double local = civil_to_epoch(civil);
  CallRecord r;
  std::string_view rest = text.substr(pos);
  if (rest.empty()) {
    auto whole = static_cast<std::int64_t>(std::floor(local));
    int off = 0;
    std::int64_t utc = zone.to_utc(whole, &off);
    r.timestamp = static_cast<double>(utc) + (local - static_cast<double>(whole));
    r.utc_offset_s = off;
  } else if (rest == "Z") {
    r.timestamp = local;
    r.utc_offset_s = 0;
  } else if (rest[0] == '+' || rest[0] == '-') {
    int oh = 0, om = 0;
    std::string_view o = rest.substr(1);
    bool ok = false;
    if (o.size() == 5 && o[2] == ':') ok = parse_int(o.substr(0, 2), oh) && parse_int(o.substr(3, 2), om);
    else if (o.size() == 4) ok = parse_int(o.substr(0, 2), oh) && parse_int(o.substr(2, 2), om);
    else if (o.size() == 2) ok = parse_int(o, oh);
    if (!ok) return std::nullopt;
    int off = (rest[0] == '-' ? -1 : 1) * (oh * 3600 + om * 60);
    r.timestamp = local - off;
    r.utc_offset_s = off;
  } else {
    return std::nullopt;
  }
  return r;
}

inline std::optional<CallRecord> parse_timestamp(std::string_view text, const TimeZone& zone,
                                                 const std::string& format) {
  if (format.empty()) return parse_iso_timestamp(text, zone);
  std::tm tm{};
  std::string s(trim(text));
  const char* end = ::strptime(s.c_str(), format.c_str(), &tm);
  if (!end || *end != '\0') return std::nullopt;
  CivilTime civil{tm.tm_year + 1900, static_cast<unsigned>(tm.tm_mon + 1), static_cast<unsigned>(tm.tm_mday),
                  tm.tm_hour, tm.tm_min, static_cast<double>(tm.tm_sec)};
  auto local = static_cast<std::int64_t>(civil_to_epoch(civil));
  CallRecord r;
  int off = 0;
  r.timestamp = static_cast<double>(zone.to_utc(local, &off));
  r.utc_offset_s = off;
  return r;
}

/// ISO-8601 with explicit offset, e.g. 2020-03-02T08:15:00-06:00.
inline std::string format_iso_timestamp(double utc, int offset_s) {
  CivilTime c = epoch_to_civil(utc + offset_s);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:", c.year, c.month, c.day, c.hour, c.minute);
  std::string out = buf;
  double whole = std::floor(c.second);
  std::snprintf(buf, sizeof(buf), "%02d", static_cast<int>(whole));
  out += buf;
  if (c.second != whole) {
    std::string frac = format_double(c.second - whole);
    out += frac.substr(frac.find('.'));
  }
  int a = std::abs(offset_s);
  std::snprintf(buf, sizeof(buf), "%c%02d:%02d", offset_s < 0 ? '-' : '+', a / 3600, (a % 3600) / 60);
  return out + buf;
}

// ---------------------------------------------------------------------------
// Call-log CSV

inline ParsedCalls parse_calls_text(const std::vector<std::string>& lines, const CallSchema& schema = {}) {
  ParsedCalls out;
  if (lines.empty()) throw SchemaError("call file is empty (missing header)");
  auto header = split_csv_line(lines[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(trim(header[i])), i);
  std::vector<std::string> missing;
  for (const auto* name : {&schema.datetime, &schema.latitude, &schema.longitude})
    if (!col.count(*name)) missing.push_back(*name);
  if (!missing.empty()) {
    std::string msg = "call file is missing mandatory columns:";
    for (const auto& m : missing) msg += " " + m;
    throw SchemaError(msg);
  }
  auto index_of = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };
  const auto i_time = *index_of(schema.datetime);
  const auto i_lat = *index_of(schema.latitude);
  const auto i_lon = *index_of(schema.longitude);
  struct Optional {
    std::optional<std::size_t> idx;
    std::optional<double> CallRecord::*field;
    const char* label;
  };
  const Optional optionals[] = {
      {index_of(schema.response_time), &CallRecord::reported_response_s, "response time"},
      {index_of(schema.travel_time), &CallRecord::reported_travel_s, "travel time"},
      {index_of(schema.amb_latitude), &CallRecord::ambulance_lat, "ambulance latitude"},
      {index_of(schema.amb_longitude), &CallRecord::ambulance_lon, "ambulance longitude"},
      {index_of(schema.on_scene), &CallRecord::on_scene_s, "on-scene time"},
      {index_of(schema.to_hospital), &CallRecord::to_hospital_s, "to-hospital time"},
  };
  TimeZone zone(schema.zone);

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    auto f = split_csv_line(lines[ln]);
    auto drop = [&](const std::string& why) {
      ++out.dropped;
      out.drop_reasons.push_back("line " + std::to_string(ln + 1) + ": " + why);
    };
    auto field = [&](std::size_t i) -> std::string_view { return i < f.size() ? std::string_view(f[i]) : ""; };
    auto rec = parse_timestamp(field(i_time), zone, schema.timestamp_format);
    if (!rec) {
      drop("unparseable timestamp '" + std::string(field(i_time)) + "'");
      continue;
    }
    if (!parse_double(field(i_lat), rec->lat) || !parse_double(field(i_lon), rec->lon)) {
      drop("bad coordinates");
      continue;
    }
    bool ok = true;
    for (const auto& o : optionals) {
      if (!o.idx) continue;
      auto text = trim(field(*o.idx));
      if (text.empty()) continue;
      double v = 0.0;
      if (!parse_double(text, v)) {
        drop(std::string("bad ") + o.label);
        ok = false;
        break;
      }
      (*rec).*o.field = v;
    }
    if (!ok) continue;
    out.calls.push_back(*rec);
  }
  std::stable_sort(out.calls.begin(), out.calls.end(),
                   [](const CallRecord& a, const CallRecord& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline ParsedCalls parse_calls(const std::string& path, const CallSchema& schema = {}) {
  return parse_calls_text(read_lines(path), schema);
}

/// Writes calls with the default column names and ISO timestamps.
inline std::string serialize_calls(std::span<const CallRecord> calls) {
  CallSchema s;
  std::string out = s.datetime + "," + s.latitude + "," + s.longitude + "," + s.response_time + "," +
                    s.travel_time + "," + s.amb_latitude + "," + s.amb_longitude + "," + s.on_scene + "," +
                    s.to_hospital + "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& c : calls) {
    out += format_iso_timestamp(c.timestamp, c.utc_offset_s) + "," + format_double(c.lat) + "," +
           format_double(c.lon) + "," + opt(c.reported_response_s) + "," + opt(c.reported_travel_s) + "," +
           opt(c.ambulance_lat) + "," + opt(c.ambulance_lon) + "," + opt(c.on_scene_s) + "," +
           opt(c.to_hospital_s) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering

/// Local-time window; weekdays uses ISO numbering (bit 1 = Monday).
struct PeakWindow {
  double start_s = 8 * 3600.0;
  double end_s = 20 * 3600.0;
  unsigned weekdays = 0b0111110;  // Monday..Friday

  bool contains_local(double local_epoch) const {
    double sod = seconds_of_day(local_epoch);
    return ((weekdays >> iso_weekday(local_epoch)) & 1u) && sod >= start_s && sod < end_s;
  }
};

inline std::vector<CallRecord> filter_peak(std::span<const CallRecord> calls, const PeakWindow& window = {}) {
  std::vector<CallRecord> out;
  for (const auto& c : calls)
    if (window.contains_local(c.local_time())) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Demand matrix

struct DemandMatrix {
  Dense<int> counts;  // periods x regions
  double period_length_s = 3600.0;
  std::vector<double> period_start_times;  // UTC epoch seconds
  std::vector<int> period_offsets;         // local UTC offset at each period start

  std::size_t periods() const noexcept { return counts.rows(); }
  std::size_t regions() const noexcept { return counts.cols(); }
  long total() const {
    return std::accumulate(counts.data().begin(), counts.data().end(), 0L);
  }
};

struct DemandBuildOptions {
  double snap_cells = 1.0;
  /// Optional period predicate (period start UTC, local offset). Periods
  /// that fail it are omitted and their calls counted as dropped.
  std::function<bool(double, int)> keep_period;
  const TimeZone* zone = nullptr;  // offsets for period starts; UTC if null
};

struct DemandBuild {
  DemandMatrix matrix;
  std::size_t dropped_out_of_bounds = 0;
  std::size_t dropped_outside_periods = 0;
};

inline DemandBuild build_demand_matrix(std::span<const CallRecord> calls, const Grid& grid,
                                       double period_length_s = 3600.0, const DemandBuildOptions& opts = {}) {
  if (!(period_length_s > 0.0)) throw ConfigError("period length must be positive");
  DemandBuild out;
  out.matrix.period_length_s = period_length_s;
  std::vector<std::pair<std::int64_t, std::size_t>> located;  // (period index, cell)
  for (const auto& c : calls) {
    try {
      auto cell = assign_cell(grid, c.lat, c.lon, opts.snap_cells);
      located.emplace_back(static_cast<std::int64_t>(std::floor(c.timestamp / period_length_s)), cell);
    } catch (const OutOfBounds&) {
      ++out.dropped_out_of_bounds;
    }
  }
  if (located.empty()) {
    out.matrix.counts = Dense<int>(0, grid.num_cells());
    return out;
  }
  auto [lo, hi] = std::minmax_element(located.begin(), located.end());
  std::int64_t first = lo->first;
  std::int64_t last = hi->first;
  std::vector<std::int64_t> row_of(static_cast<std::size_t>(last - first + 1), -1);
  std::int64_t rows = 0;
  for (std::int64_t p = first; p <= last; ++p) {
    double start = static_cast<double>(p) * period_length_s;
    int off = opts.zone ? opts.zone->offset_at(static_cast<std::int64_t>(start)) : 0;
    if (opts.keep_period && !opts.keep_period(start, off)) continue;
    row_of[static_cast<std::size_t>(p - first)] = rows++;
    out.matrix.period_start_times.push_back(start);
    out.matrix.period_offsets.push_back(off);
  }
  out.matrix.counts = Dense<int>(static_cast<std::size_t>(rows), grid.num_cells(), 0);
  for (const auto& [p, cell] : located) {
    auto r = row_of[static_cast<std::size_t>(p - first)];
    if (r < 0) {
      ++out.dropped_outside_periods;
      continue;
    }
    ++out.matrix.counts(static_cast<std::size_t>(r), cell);
  }
  return out;
}

/// Period predicate matching a peak window on the period's local start.
inline std::function<bool(double, int)> peak_period_filter(PeakWindow window) {
  return [window](double start_utc, int offset) { return window.contains_local(start_utc + offset); };
}

inline std::string demand_matrix_csv(const DemandMatrix& m) {
  std::string out = "period_start";
  for (std::size_t j = 0; j < m.regions(); ++j) out += ",r" + std::to_string(j);
  out += '\n';
  for (std::size_t p = 0; p < m.periods(); ++p) {
    int off = p < m.period_offsets.size() ? m.period_offsets[p] : 0;
    out += format_iso_timestamp(m.period_start_times[p], off);
    for (std::size_t j = 0; j < m.regions(); ++j) out += "," + std::to_string(m.counts(p, j));
    out += '\n';
  }
  return out;
}

inline DemandMatrix load_demand_matrix(const std::string& path, double period_length_s = 3600.0) {
  auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ": empty demand matrix file");
  auto header = split_csv_line(lines[0]);
  std::size_t regions = header.size() - 1;
  std::vector<std::vector<int>> rows;
  DemandMatrix m;
  m.period_length_s = period_length_s;
  TimeZone utc("UTC");
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    auto f = split_csv_line(lines[ln]);
    if (f.size() != regions + 1) throw ParseError(path + ": line " + std::to_string(ln + 1) + " has wrong width");
    auto t = parse_iso_timestamp(f[0], utc);
    if (!t) throw ParseError(path + ": line " + std::to_string(ln + 1) + " has a bad period start");
    m.period_start_times.push_back(t->timestamp);
    m.period_offsets.push_back(t->utc_offset_s);
    std::vector<int> row(regions);
    for (std::size_t j = 0; j < regions; ++j)
      if (!parse_int(f[j + 1], row[j]) || row[j] < 0)
        throw ParseError(path + ": line " + std::to_string(ln + 1) + ", column " + std::to_string(j + 2) +
                         " is not a nonnegative count");
    rows.push_back(std::move(row));
  }
  m.counts = Dense<int>(rows.size(), regions);
  for (std::size_t p = 0; p < rows.size(); ++p)
    for (std::size_t j = 0; j < regions; ++j) m.counts(p, j) = rows[p][j];
  return m;
}

// ---------------------------------------------------------------------------
// Train/test splitting

struct Chronological {
  double fraction = 0.8;
};

struct KFold {
  std::size_t k = 5;
  std::size_t fold_index = 0;
  std::uint64_t seed = 0;
};

using SplitMode = std::variant<Chronological, KFold>;

/// Fold id for each of n items: a seeded shuffle cut into k near-equal runs.
inline std::vector<std::size_t> kfold_assignment(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (n < k) throw DataError("k-fold needs at least k items");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, "folds");
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = pos * k / n;
  return fold;
}

/// Returns (train indices, test indices), each ascending.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                                    const SplitMode& mode) {
  if (n < 2) throw DataError("splitting needs at least 2 items");
  std::vector<std::size_t> train, test;
  if (const auto* c = std::get_if<Chronological>(&mode)) {
    if (!(c->fraction > 0.0 && c->fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
    auto n_train = static_cast<std::size_t>(std::floor(c->fraction * static_cast<double>(n) + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    for (std::size_t i = 0; i < n; ++i) (i < n_train ? train : test).push_back(i);
  } else {
    const auto& kf = std::get<KFold>(mode);
    if (kf.fold_index >= kf.k) throw ConfigError("fold index out of range");
    auto fold = kfold_assignment(n, kf.k, kf.seed);
    for (std::size_t i = 0; i < n; ++i) (fold[i] == kf.fold_index ? test : train).push_back(i);
  }
  return {std::move(train), std::move(test)};
}

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(std::span<const T> items, const SplitMode& mode) {
  auto [tr, te] = split_indices(items.size(), mode);
  std::vector<T> train, test;
  for (auto i : tr) train.push_back(items[i]);
  for (auto i : te) test.push_back(items[i]);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Quantile trimming

struct TimePair {
  double grid_s = 0.0;
  double reported_s = 0.0;
  friend bool operator==(const TimePair&, const TimePair&) = default;
};

/// Drops pairs whose reported time falls outside [q_lo, q_hi], where q_lo is
/// the value at rank floor(p*n)+1 and q_hi the value at rank n-floor(p*n) of
/// the sorted reported times (1-based nearest ranks).
inline std::vector<TimePair> trim_quantiles(std::span<const TimePair> pairs, double p) {
  if (!(p >= 0.0 && p < 0.5)) throw ConfigError("trim fraction must lie in [0, 0.5)");
  if (pairs.empty() || p == 0.0) return {pairs.begin(), pairs.end()};
  std::vector<double> sorted;
  sorted.reserve(pairs.size());
  for (const auto& pr : pairs) sorted.push_back(pr.reported_s);
  std::sort(sorted.begin(), sorted.end());
  std::size_t n = sorted.size();
  auto cut = static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
  if (2 * cut >= n) return {};
  double lo = sorted[cut];
  double hi = sorted[n - 1 - cut];
  std::vector<TimePair> out;
  for (const auto& pr : pairs)
    if (pr.reported_s >= lo && pr.reported_s <= hi) out.push_back(pr);
  return out;
}

}  // namespace emsdeploy
