#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "emsdeploy/common.hpp"
#include "emsdeploy/geogrid.hpp"
#include "emsdeploy/ingest.hpp"
#include "json.hpp"

namespace emsdeploy {

enum class CalibrationKind { identity, linear, loglog };

inline std::string to_string(CalibrationKind k) {
  switch (k) {
    case CalibrationKind::identity: return "identity";
    case CalibrationKind::linear: return "linear";
    case CalibrationKind::loglog: return "loglog";
  }
  return "identity";
}

inline CalibrationKind calibration_kind_from_string(const std::string& s) {
  if (s == "identity") return CalibrationKind::identity;
  if (s == "linear") return CalibrationKind::linear;
  if (s == "loglog") return CalibrationKind::loglog;
  throw ConfigError("unknown calibration kind: " + s);
}

/// Maps grid travel time to an adjusted (reported-scale) travel time.
///   identity: t
///   linear:   a + b t  (floored at 0)
///   loglog:   exp(a + b ln t), with 0 mapped to 0
struct CalibrationModel {
  CalibrationKind kind = CalibrationKind::identity;
  double a = 0.0;
  double b = 1.0;
  double r_squared = 1.0;
  std::size_t n_used = 0;
  double trim_p = 0.0;

  double apply(double grid_s) const {
    switch (kind) {
      case CalibrationKind::identity: return grid_s;
      case CalibrationKind::linear: return std::max(0.0, a + b * grid_s);
      case CalibrationKind::loglog: return grid_s > 0.0 ? std::exp(a + b * std::log(grid_s)) : 0.0;
    }
    return grid_s;
  }
};

inline CalibrationModel identity_calibration() { return {}; }

namespace detail {

struct LineFit {
  double a, b, r2;
};

inline LineFit ols_line(std::span<const double> u, std::span<const double> v) {
  std::size_t n = u.size();
  double mu = mean_of(u), mv = mean_of(v);
  double suu = 0.0, suv = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suv += (u[i] - mu) * (v[i] - mv);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  if (!(suu > 1e-300 * static_cast<double>(n)))
    throw DataError("singular calibration fit: all regressor values are equal");
  double b = suv / suu;
  double a = mv - b * mu;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = v[i] - (a + b * u[i]);
    ssr += e * e;
  }
  double r2 = svv > 0.0 ? 1.0 - ssr / svv : 1.0;
  return {a, b, r2};
}

}  // namespace detail

/// OLS of ln(reported) on ln(grid) after trimming reported-time quantiles.
/// Pairs with a nonpositive value are skipped.
inline CalibrationModel fit_loglog(std::span<const TimePair> pairs, double trim_p = 0.01) {
  auto kept = trim_quantiles(pairs, trim_p);
  std::vector<double> u, v;
  for (const auto& p : kept)
    if (p.grid_s > 0.0 && p.reported_s > 0.0) {
      u.push_back(std::log(p.grid_s));
      v.push_back(std::log(p.reported_s));
    }
  if (u.size() < 3) throw DataError("log-log calibration needs at least 3 positive pairs after trimming");
  auto f = detail::ols_line(u, v);
  return {CalibrationKind::loglog, f.a, f.b, f.r2, u.size(), trim_p};
}

inline CalibrationModel fit_linear(std::span<const TimePair> pairs, double trim_p = 0.01) {
  auto kept = trim_quantiles(pairs, trim_p);
  std::vector<double> u, v;
  for (const auto& p : kept) {
    u.push_back(p.grid_s);
    v.push_back(p.reported_s);
  }
  if (u.size() < 3) throw DataError("linear calibration needs at least 3 pairs after trimming");
  auto f = detail::ols_line(u, v);
  return {CalibrationKind::linear, f.a, f.b, f.r2, u.size(), trim_p};
}

/// (grid time from the ambulance's cell to the call's cell, reported travel
/// time) for calls carrying both fields. Counts exclusions in `excluded`.
inline std::vector<TimePair> calibration_pairs(std::span<const CallRecord> calls, const Grid& grid,
                                               std::size_t* excluded = nullptr, double snap_cells = 1.0) {
  std::vector<TimePair> out;
  std::size_t skipped = 0;
  for (const auto& c : calls) {
    if (!c.reported_travel_s || !c.ambulance_lat || !c.ambulance_lon) {
      ++skipped;
      continue;
    }
    try {
      auto from = assign_cell(grid, *c.ambulance_lat, *c.ambulance_lon, snap_cells);
      auto to = assign_cell(grid, c.lat, c.lon, snap_cells);
      out.push_back({grid.travel_time_s(from, to), *c.reported_travel_s});
    } catch (const OutOfBounds&) {
      ++skipped;
    }
  }
  if (excluded) *excluded = skipped;
  return out;
}

struct VerificationReport {
  std::vector<double> batch_errors_s;  // mean(simulated - reported) per batch
  double mean_error_s = 0.0;
  double std_error_s = 0.0;
  std::size_t n_batches = 0;
  std::size_t batch_size = 0;
  std::size_t excluded = 0;
};

/// Compares calibrated grid travel times with reported ones over contiguous
/// batches of `batch_size` usable calls.
inline VerificationReport verify(std::span<const CallRecord> test_calls, const Grid& grid,
                                 const CalibrationModel& model, std::size_t batch_size, std::size_t n_batches) {
  if (batch_size == 0 || n_batches == 0) throw ConfigError("verification needs positive batch size and count");
  VerificationReport rep;
  auto pairs = calibration_pairs(test_calls, grid, &rep.excluded);
  std::size_t available = pairs.size() / batch_size;
  if (available == 0)
    throw DataError("verification needs at least " + std::to_string(batch_size) + " calls with reported fields, have " +
                    std::to_string(pairs.size()));
  rep.n_batches = std::min(available, n_batches);
  rep.batch_size = batch_size;
  for (std::size_t b = 0; b < rep.n_batches; ++b) {
    double s = 0.0;
    for (std::size_t k = b * batch_size; k < (b + 1) * batch_size; ++k)
      s += model.apply(pairs[k].grid_s) - pairs[k].reported_s;
    rep.batch_errors_s.push_back(s / static_cast<double>(batch_size));
  }
  rep.mean_error_s = mean_of(rep.batch_errors_s);
  rep.std_error_s = sample_std(rep.batch_errors_s);
  return rep;
}

inline nlohmann::json calibration_to_json(const CalibrationModel& m) {
  return {{"kind", to_string(m.kind)}, {"a", m.a},           {"b", m.b},
          {"r_squared", m.r_squared},  {"trim_p", m.trim_p}, {"n_used", m.n_used}};
}

inline CalibrationModel calibration_from_json(const nlohmann::json& j) {
  CalibrationModel m;
  m.kind = calibration_kind_from_string(j.at("kind").get<std::string>());
  m.a = j.value("a", 0.0);
  m.b = j.value("b", 1.0);
  m.r_squared = j.value("r_squared", 1.0);
  m.trim_p = j.value("trim_p", 0.0);
  m.n_used = j.value("n_used", std::size_t{0});
  return m;
}

}  // namespace emsdeploy
