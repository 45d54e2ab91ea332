#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "emsdeploy/analysis.hpp"
#include "emsdeploy/common.hpp"
#include "emsdeploy/geogrid.hpp"
#include "emsdeploy/ingest.hpp"

namespace emsdeploy {

/// A synthetic city: grid, stations, hospitals and a weekday peak-hour call
/// log whose reported travel times follow a known log-log model.
struct SyntheticCityConfig {
  Bounds bounds{30.10, 30.55, -97.95, -97.55};
  std::size_t n_rows = 6;
  std::size_t n_cols = 6;
  std::size_t n_stations = 4;
  std::vector<std::size_t> station_cells;  // overrides n_stations when set
  std::vector<std::size_t> hospital_cells;
  double speed_kmh = 40.0;
  double calls_per_hour = 4.0;
  std::size_t n_calls = 2000;
  std::size_t n_hotspots = 3;
  double hotspot_share = 0.7;
  double start_utc = 1546869600.0;  // Monday 2019-01-07 14:00 UTC (08:00 at -06:00)
  int utc_offset_s = -6 * 3600;
  // reported travel = exp(a + b ln grid) * exp(N(0, noise_sigma))
  double true_a = 0.8;
  double true_b = 0.8;
  double noise_sigma = 0.25;
};

struct SyntheticCity {
  Grid grid;
  std::vector<CallRecord> calls;
};

/// Station cells spread through the grid in index order.
inline std::vector<std::size_t> spread_cells(std::size_t n_cells, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < k; ++s)
    out.push_back(static_cast<std::size_t>((static_cast<double>(s) + 0.5) * static_cast<double>(n_cells) /
                                           static_cast<double>(k)));
  return out;
}

inline SyntheticCity generate_city(const SyntheticCityConfig& cfg, std::uint64_t seed) {
  auto stations = cfg.station_cells.empty() ? spread_cells(cfg.n_rows * cfg.n_cols, cfg.n_stations) : cfg.station_cells;
  SyntheticCity city;
  city.grid = build_grid(cfg.bounds, cfg.n_rows, cfg.n_cols, SyntheticSpeedProvider{cfg.speed_kmh}, stations,
                         cfg.hospital_cells);
  const Grid& g = city.grid;

  auto rng = make_rng(seed, "synthetic-city");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<LatLon> hotspots;
  for (std::size_t h = 0; h < cfg.n_hotspots; ++h)
    hotspots.push_back({cfg.bounds.min_lat + (0.2 + 0.6 * unit(rng)) * (cfg.bounds.max_lat - cfg.bounds.min_lat),
                        cfg.bounds.min_lon + (0.2 + 0.6 * unit(rng)) * (cfg.bounds.max_lon - cfg.bounds.min_lon)});
  const double spread_lat = (cfg.bounds.max_lat - cfg.bounds.min_lat) / 10.0;
  const double spread_lon = (cfg.bounds.max_lon - cfg.bounds.min_lon) / 10.0;
  auto clamp_inside = [](double v, double lo, double hi) {
    double pad = (hi - lo) * 1e-9;
    return std::clamp(v, lo + pad, hi - pad);
  };

  // Poisson arrivals inside Monday-Friday 08:00-20:00 local windows.
  std::exponential_distribution<double> gap(cfg.calls_per_hour / 3600.0);
  double local_day0 = std::floor((cfg.start_utc + cfg.utc_offset_s) / 86400.0) * 86400.0;
  double t = cfg.start_utc;
  std::size_t day = 0;
  while (city.calls.size() < cfg.n_calls) {
    double day_start_local = local_day0 + static_cast<double>(day) * 86400.0;
    unsigned wd = iso_weekday(day_start_local);
    double open = day_start_local + 8 * 3600.0 - cfg.utc_offset_s;
    double close = day_start_local + 20 * 3600.0 - cfg.utc_offset_s;
    if (wd >= 6) {
      ++day;
      continue;
    }
    t = std::max(t, open);
    while (city.calls.size() < cfg.n_calls) {
      t += gap(rng);
      if (t >= close) break;
      CallRecord c;
      c.timestamp = std::round(t);
      c.utc_offset_s = cfg.utc_offset_s;
      if (!hotspots.empty() && unit(rng) < cfg.hotspot_share) {
        const auto& h = hotspots[static_cast<std::size_t>(unit(rng) * static_cast<double>(hotspots.size())) % hotspots.size()];
        c.lat = clamp_inside(h.lat + spread_lat * gauss(rng), cfg.bounds.min_lat, cfg.bounds.max_lat);
        c.lon = clamp_inside(h.lon + spread_lon * gauss(rng), cfg.bounds.min_lon, cfg.bounds.max_lon);
      } else {
        c.lat = clamp_inside(cfg.bounds.min_lat + unit(rng) * (cfg.bounds.max_lat - cfg.bounds.min_lat),
                             cfg.bounds.min_lat, cfg.bounds.max_lat);
        c.lon = clamp_inside(cfg.bounds.min_lon + unit(rng) * (cfg.bounds.max_lon - cfg.bounds.min_lon),
                             cfg.bounds.min_lon, cfg.bounds.max_lon);
      }
      // Reported fields: the ambulance comes from a random station.
      std::size_t cell = assign_cell(g, c.lat, c.lon);
      if (g.num_stations() > 0) {
        auto s = static_cast<std::size_t>(unit(rng) * static_cast<double>(g.num_stations())) % g.num_stations();
        const auto& origin = g.cell_centers[g.station_cells[s]];
        c.ambulance_lat = origin.lat;
        c.ambulance_lon = origin.lon;
        double grid_s = std::max(g.travel_time_s(g.station_cells[s], cell), 30.0);
        double travel = std::exp(cfg.true_a + cfg.true_b * std::log(grid_s) + cfg.noise_sigma * gauss(rng));
        c.reported_travel_s = std::round(travel * 10.0) / 10.0;
        c.reported_response_s = *c.reported_travel_s + std::round(30.0 + 60.0 * unit(rng));
        c.on_scene_s = std::round(std::exp(3.65 + 0.3 * gauss(rng)) * 60.0);
      }
      city.calls.push_back(c);
    }
    ++day;
  }
  return city;
}

/// Tract map grouping grid cells into horizontal strips of `cells_per_tract`.
inline TractMap synthetic_tract_map(const Grid& g, std::size_t cells_per_tract = 2) {
  TractMap m;
  for (std::size_t c = 0; c < g.num_cells(); ++c) m[c] = "T" + std::to_string(c / cells_per_tract);
  return m;
}

inline SviTable synthetic_svi(std::span<const std::string> tract_ids, std::uint64_t seed) {
  auto rng = make_rng(seed, "synthetic-svi");
  std::lognormal_distribution<double> size(7.5, 0.5);
  SviTable t;
  for (const auto& id : tract_ids) {
    std::array<double, kSviColumns.size()> row{};
    for (auto& v : row) v = std::round(size(rng));
    t[id] = row;
  }
  return t;
}

/// Tract dataset whose dependent variable depends only on avg.station.time:
/// y = 2 + 0.6 * avg + noise, min time loosely tied to avg, SVI columns pure noise.
inline TractDataset synthetic_tract_dataset(std::size_t n_tracts, double noise_sd, std::uint64_t seed) {
  auto rng = make_rng(seed, "synthetic-tracts");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TractDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n_tracts), static_cast<Eigen::Index>(kFeatureCount));
  ds.y.resize(static_cast<Eigen::Index>(n_tracts));
  for (std::size_t r = 0; r < n_tracts; ++r) {
    auto i = static_cast<Eigen::Index>(r);
    double avg = 8.0 + 6.0 * unit(rng);
    double mn = 0.3 * avg + 1.5 * gauss(rng) + 3.0;
    ds.features(i, kMinTimeColumn) = mn;
    ds.features(i, kAvgTimeColumn) = avg;
    for (std::size_t c = 2; c < kFeatureCount; ++c) ds.features(i, static_cast<Eigen::Index>(c)) = 1000.0 + 300.0 * gauss(rng);
    ds.y(i) = 2.0 + 0.6 * avg + noise_sd * gauss(rng);
    ds.tract_ids.push_back("T" + std::to_string(r));
  }
  return ds;
}

}  // namespace emsdeploy
