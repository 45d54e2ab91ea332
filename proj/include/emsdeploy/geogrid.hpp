#pragma once

#include <cmath>
#include <concepts>
#include <filesystem>
#include <string>
#include <vector>

#include "emsdeploy/common.hpp"
#include "json.hpp"

namespace emsdeploy {

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const LatLon&, const LatLon&) = default;
};

struct Bounds {
  double min_lat = 0.0;
  double max_lat = 0.0;
  double min_lon = 0.0;
  double max_lon = 0.0;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr double kDefaultCoverageThresholdS = 600.0;

/// Great-circle distance in kilometres.
inline double haversine_km(LatLon a, LatLon b) {
  constexpr double deg = 3.14159265358979323846 / 180.0;
  double dlat = (b.lat - a.lat) * deg;
  double dlon = (b.lon - a.lon) * deg;
  double s = std::sin(dlat / 2);
  double t = std::sin(dlon / 2);
  double h = s * s + std::cos(a.lat * deg) * std::cos(b.lat * deg) * t * t;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

inline double synthetic_travel_time(LatLon a, LatLon b, double speed_kmh) {
  if (!(speed_kmh > 0.0)) throw ConfigError("travel speed must be positive");
  if (a == b) return 0.0;
  return haversine_km(a, b) / speed_kmh * 3600.0;
}

// ---------------------------------------------------------------------------
// Travel-time providers fill the full cell-to-cell matrix from cell centers.

template <class P>
concept TravelTimeProvider = requires(const P& p, std::span<const LatLon> centers) {
  { p.matrix(centers) } -> std::same_as<Dense<double>>;
};

/// Haversine distance at a constant speed. Stand-in for road routing.
struct SyntheticSpeedProvider {
  double speed_kmh = 40.0;

  Dense<double> matrix(std::span<const LatLon> centers) const {
    if (!(speed_kmh > 0.0)) throw ConfigError("travel speed must be positive");
    Dense<double> m(centers.size(), centers.size(), 0.0);
    for (std::size_t i = 0; i < centers.size(); ++i)
      for (std::size_t j = i + 1; j < centers.size(); ++j) {
        double t = synthetic_travel_time(centers[i], centers[j], speed_kmh);
        m(i, j) = t;
        m(j, i) = t;
      }
    return m;
  }
};

/// A precomputed matrix, e.g. exported from an external routing engine.
struct MatrixProvider {
  Dense<double> times;

  Dense<double> matrix(std::span<const LatLon> centers) const {
    if (times.rows() != centers.size() || times.cols() != centers.size())
      throw DataError("travel matrix side " + std::to_string(times.rows()) + "x" +
                      std::to_string(times.cols()) + " does not match " +
                      std::to_string(centers.size()) + " grid cells");
    return times;
  }
};

// ---------------------------------------------------------------------------

/// Uniform rectangular partition of a bounding box. Row 0 is the southern
/// edge, column 0 the western edge; cell index = row * n_cols + col.
struct Grid {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  Bounds bounds;
  std::vector<LatLon> cell_centers;
  Dense<double> travel_time_s;
  std::vector<std::size_t> station_cells;
  std::vector<std::size_t> hospital_cells;

  std::size_t num_cells() const noexcept { return n_rows * n_cols; }
  std::size_t num_stations() const noexcept { return station_cells.size(); }
  std::size_t row_of(std::size_t cell) const noexcept { return cell / n_cols; }
  std::size_t col_of(std::size_t cell) const noexcept { return cell % n_cols; }
  std::size_t cell_at(std::size_t row, std::size_t col) const noexcept { return row * n_cols + col; }
  double cell_height() const noexcept { return (bounds.max_lat - bounds.min_lat) / static_cast<double>(n_rows); }
  double cell_width() const noexcept { return (bounds.max_lon - bounds.min_lon) / static_cast<double>(n_cols); }

  /// Travel time from station i's cell to region j.
  double station_time(std::size_t station, std::size_t region) const {
    return travel_time_s(station_cells[station], region);
  }
};

inline void validate_travel_matrix(const Dense<double>& m) {
  if (m.rows() != m.cols()) throw DataError("travel matrix is not square");
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      if (!std::isfinite(v) || v < 0.0)
        throw DataError("travel matrix entry (" + std::to_string(i) + "," + std::to_string(j) +
                        ") must be finite and nonnegative");
      if (i == j && v != 0.0)
        throw DataError("travel matrix diagonal entry " + std::to_string(i) + " must be zero");
    }
}

inline void validate_grid(const Grid& g) {
  if (g.cell_centers.size() != g.num_cells()) throw DataError("cell_centers length does not match grid size");
  if (g.travel_time_s.rows() != g.num_cells()) throw DataError("travel matrix does not match grid size");
  validate_travel_matrix(g.travel_time_s);
  for (auto s : g.station_cells)
    if (s >= g.num_cells()) throw DataError("station cell " + std::to_string(s) + " out of range");
  for (auto h : g.hospital_cells)
    if (h >= g.num_cells()) throw DataError("hospital cell " + std::to_string(h) + " out of range");
}

template <TravelTimeProvider Provider>
Grid build_grid(const Bounds& bounds, std::size_t n_rows, std::size_t n_cols, const Provider& provider,
                std::vector<std::size_t> station_cells = {}, std::vector<std::size_t> hospital_cells = {}) {
  if (n_rows < 1 || n_cols < 1) throw ConfigError("grid needs at least one row and one column");
  if (!(bounds.min_lat < bounds.max_lat) || !(bounds.min_lon < bounds.max_lon))
    throw ConfigError("grid bounds have zero area: need min_lat < max_lat and min_lon < max_lon");
  Grid g;
  g.n_rows = n_rows;
  g.n_cols = n_cols;
  g.bounds = bounds;
  g.cell_centers.reserve(n_rows * n_cols);
  double h = g.cell_height();
  double w = g.cell_width();
  for (std::size_t r = 0; r < n_rows; ++r)
    for (std::size_t c = 0; c < n_cols; ++c)
      g.cell_centers.push_back({bounds.min_lat + (static_cast<double>(r) + 0.5) * h,
                                bounds.min_lon + (static_cast<double>(c) + 0.5) * w});
  g.travel_time_s = provider.matrix(g.cell_centers);
  g.station_cells = std::move(station_cells);
  g.hospital_cells = std::move(hospital_cells);
  validate_grid(g);
  return g;
}

/// Maps a coordinate to its containing cell. Points on a shared boundary go
/// to the cell with the larger row/col index. Points up to `snap_cells`
/// cell-widths outside the bounds are clamped onto the nearest edge cell.
inline std::size_t assign_cell(const Grid& g, double lat, double lon, double snap_cells = 0.0) {
  double fr = (lat - g.bounds.min_lat) / g.cell_height();
  double fc = (lon - g.bounds.min_lon) / g.cell_width();
  double nr = static_cast<double>(g.n_rows);
  double nc = static_cast<double>(g.n_cols);
  if (!std::isfinite(fr) || !std::isfinite(fc) || fr < -snap_cells || fr > nr + snap_cells ||
      fc < -snap_cells || fc > nc + snap_cells)
    throw OutOfBounds("point (" + format_double(lat) + ", " + format_double(lon) + ") lies outside the grid");
  auto clamp_index = [](double f, std::size_t n) {
    if (f < 0.0) return std::size_t{0};
    auto i = static_cast<std::size_t>(std::floor(f));
    return std::min(i, n - 1);
  };
  return g.cell_at(clamp_index(fr, g.n_rows), clamp_index(fc, g.n_cols));
}

/// Queen (8-neighbourhood) adjacency, diagonal included.
inline BoolMatrix derive_adjacency(const Grid& g) {
  std::size_t n = g.num_cells();
  BoolMatrix adj(n, n, 0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      auto dr = static_cast<long>(g.row_of(a)) - static_cast<long>(g.row_of(b));
      auto dc = static_cast<long>(g.col_of(a)) - static_cast<long>(g.col_of(b));
      adj(a, b) = (std::labs(dr) <= 1 && std::labs(dc) <= 1) ? 1 : 0;
    }
  return adj;
}

struct CoverageMatrix {
  BoolMatrix entries;  // stations x regions
  double threshold_s = kDefaultCoverageThresholdS;

  bool covers(std::size_t station, std::size_t region) const { return entries(station, region) != 0; }
};

inline CoverageMatrix derive_coverage(const Grid& g, double threshold_s = kDefaultCoverageThresholdS) {
  CoverageMatrix cov{BoolMatrix(g.num_stations(), g.num_cells(), 0), threshold_s};
  for (std::size_t i = 0; i < g.num_stations(); ++i)
    for (std::size_t j = 0; j < g.num_cells(); ++j)
      cov.entries(i, j) = g.station_time(i, j) <= threshold_s ? 1 : 0;
  return cov;
}

/// Region-to-region reachability within the threshold; row j is the ball
/// around cell j used for the regional demand aggregate.
inline BoolMatrix derive_region_ball(const Grid& g, double threshold_s = kDefaultCoverageThresholdS) {
  std::size_t n = g.num_cells();
  BoolMatrix ball(n, n, 0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) ball(a, b) = g.travel_time_s(a, b) <= threshold_s ? 1 : 0;
  return ball;
}

// ---------------------------------------------------------------------------
// Persistence: headerless CSV matrices and the grid JSON document.

inline std::string travel_matrix_csv(const Dense<double>& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void save_travel_matrix(const std::string& path, const Dense<double>& m) {
  write_text(path, travel_matrix_csv(m));
}

inline Dense<double> load_travel_matrix(const std::string& path) {
  std::vector<std::vector<double>> rows;
  auto lines = read_lines(path);
  for (std::size_t r = 0; r < lines.size(); ++r) {
    if (trim(lines[r]).empty()) continue;
    auto fields = split_csv_line(lines[r]);
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v))
        throw ParseError(path + ": non-numeric entry at row " + std::to_string(rows.size() + 1) + ", column " +
                         std::to_string(c + 1));
      if (!std::isfinite(v) || v < 0.0)
        throw ParseError(path + ": negative or non-finite entry at row " + std::to_string(rows.size() + 1) +
                         ", column " + std::to_string(c + 1));
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  std::size_t n = rows.size();
  Dense<double> m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    if (rows[r].size() != n)
      throw ParseError(path + ": row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                       " entries, expected " + std::to_string(n) + " (matrix must be square)");
    for (std::size_t c = 0; c < n; ++c) m(r, c) = rows[r][c];
  }
  for (std::size_t i = 0; i < n; ++i)
    if (m(i, i) != 0.0) throw ParseError(path + ": diagonal entry at row " + std::to_string(i + 1) + " is not zero");
  return m;
}

inline std::string bool_matrix_csv(const BoolMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += m(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json grid_to_json(const Grid& g, const std::string& travel_time_ref) {
  nlohmann::json j;
  j["n_rows"] = g.n_rows;
  j["n_cols"] = g.n_cols;
  j["bounds"] = {{"min_lat", g.bounds.min_lat},
                 {"max_lat", g.bounds.max_lat},
                 {"min_lon", g.bounds.min_lon},
                 {"max_lon", g.bounds.max_lon}};
  auto centers = nlohmann::json::array();
  for (const auto& c : g.cell_centers) centers.push_back({c.lat, c.lon});
  j["cell_centers"] = std::move(centers);
  j["station_cells"] = g.station_cells;
  j["hospital_cells"] = g.hospital_cells;
  j["travel_time_ref"] = travel_time_ref;
  return j;
}

/// Writes `<dir>/<stem>.json` and its sibling travel matrix `<dir>/<stem>_travel.csv`.
inline void save_grid(const Grid& g, const std::filesystem::path& json_path) {
  auto csv_name = json_path.stem().string() + "_travel.csv";
  save_travel_matrix((json_path.parent_path() / csv_name).string(), g.travel_time_s);
  write_text(json_path.string(), grid_to_json(g, csv_name).dump(2) + "\n");
}

inline Grid load_grid(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open grid file: " + json_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    Grid g;
    g.n_rows = j.at("n_rows").get<std::size_t>();
    g.n_cols = j.at("n_cols").get<std::size_t>();
    const auto& b = j.at("bounds");
    g.bounds = {b.at("min_lat").get<double>(), b.at("max_lat").get<double>(), b.at("min_lon").get<double>(),
                b.at("max_lon").get<double>()};
    for (const auto& c : j.at("cell_centers")) g.cell_centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    g.station_cells = j.at("station_cells").get<std::vector<std::size_t>>();
    g.hospital_cells = j.value("hospital_cells", std::vector<std::size_t>{});
    auto ref = j.at("travel_time_ref").get<std::string>();
    g.travel_time_s = load_travel_matrix((json_path.parent_path() / ref).string());
    validate_grid(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("grid file " + json_path.string() + ": " + e.what());
  }
}

}  // namespace emsdeploy
