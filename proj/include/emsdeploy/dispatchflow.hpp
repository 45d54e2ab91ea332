#pragma once

#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <vector>

#include "emsdeploy/common.hpp"
#include "emsdeploy/geogrid.hpp"

namespace emsdeploy {

/// Ambulances per station under a fleet bound.
struct Deployment {
  std::vector<int> x;
  int fleet_bound = 0;

  int total() const { return std::accumulate(x.begin(), x.end(), 0); }

  void validate() const {
    for (int v : x)
      if (v < 0) throw DataError("deployment has a negative station count");
    if (total() > fleet_bound)
      throw DataError("deployment places " + std::to_string(total()) + " ambulances but the fleet is " +
                      std::to_string(fleet_bound));
  }
  friend bool operator==(const Deployment&, const Deployment&) = default;
};

struct Edge {
  std::size_t station = 0;
  std::size_t region = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Feasible station-to-region edges E.
struct EdgeSet {
  std::size_t n_stations = 0;
  std::size_t n_regions = 0;
  std::vector<Edge> edges;

  static EdgeSet from_coverage(const CoverageMatrix& cov) {
    EdgeSet e{cov.entries.rows(), cov.entries.cols(), {}};
    for (std::size_t i = 0; i < e.n_stations; ++i)
      for (std::size_t j = 0; j < e.n_regions; ++j)
        if (cov.covers(i, j)) e.edges.push_back({i, j});
    return e;
  }

  static EdgeSet complete(std::size_t n_stations, std::size_t n_regions) {
    EdgeSet e{n_stations, n_regions, {}};
    for (std::size_t i = 0; i < n_stations; ++i)
      for (std::size_t j = 0; j < n_regions; ++j) e.edges.push_back({i, j});
    return e;
  }
};

/// Incidence matrices (B_I, B_J): stations x |E| and regions x |E|.
inline std::pair<Dense<int>, Dense<int>> incidence(const EdgeSet& e) {
  Dense<int> bi(e.n_stations, e.edges.size(), 0);
  Dense<int> bj(e.n_regions, e.edges.size(), 0);
  std::set<Edge> seen;
  for (std::size_t k = 0; k < e.edges.size(); ++k) {
    const auto& ed = e.edges[k];
    if (ed.station >= e.n_stations || ed.region >= e.n_regions)
      throw DataError("edge (" + std::to_string(ed.station) + "," + std::to_string(ed.region) + ") out of range");
    if (!seen.insert(ed).second)
      throw DataError("duplicate edge (" + std::to_string(ed.station) + "," + std::to_string(ed.region) + ")");
    bi(ed.station, k) = 1;
    bj(ed.region, k) = 1;
  }
  return {std::move(bi), std::move(bj)};
}

struct ShortfallResult {
  std::vector<int> z;  // unmet demand per region
  long total = 0;
  std::vector<int> y;  // flow per edge, aligned with EdgeSet::edges
};

namespace detail {

/// Dinic max-flow on the bipartite recourse network.
class RecourseFlow {
 public:
  RecourseFlow(const EdgeSet& e, bool with_wildcard) : e_(e) {
    std::size_t I = e.n_stations, J = e.n_regions;
    source_ = 0;
    wildcard_ = I + 1;
    first_region_ = I + 2;
    sink_ = I + 2 + J;
    head_.assign(sink_ + 1, -1);
    for (std::size_t i = 0; i < I; ++i) add_arc(source_, 1 + i);
    if (with_wildcard) {
      add_arc(source_, wildcard_);
      for (std::size_t j = 0; j < J; ++j) add_arc(wildcard_, first_region_ + j);
    }
    edge_arc_.reserve(e.edges.size());
    for (const auto& ed : e.edges) edge_arc_.push_back(add_arc(1 + ed.station, first_region_ + ed.region));
    for (std::size_t j = 0; j < J; ++j) add_arc(first_region_ + j, sink_);
    with_wildcard_ = with_wildcard;
  }

  long run(std::span<const int> x, std::span<const int> d, int wildcard) {
    std::size_t I = e_.n_stations, J = e_.n_regions;
    constexpr long inf = std::numeric_limits<int>::max();
    for (auto& a : arcs_) a.cap = inf;
    std::size_t k = 0;
    for (std::size_t i = 0; i < I; ++i) arcs_[2 * k++].cap = x[i];
    if (with_wildcard_) {
      arcs_[2 * k++].cap = wildcard;
      k += J;
    }
    k += e_.edges.size();
    for (std::size_t j = 0; j < J; ++j) arcs_[2 * k++].cap = d[j];
    for (std::size_t a = 1; a < arcs_.size(); a += 2) arcs_[a].cap = 0;
    for (std::size_t a = 0; a < arcs_.size(); a += 2) arcs_[a].orig = arcs_[a].cap;

    long flow = 0;
    while (bfs()) {
      iter_ = head_;
      while (long f = dfs(source_, inf)) flow += f;
    }
    return flow;
  }

  /// Flow on edge k after run().
  int edge_flow(std::size_t k) const {
    const auto& a = arcs_[static_cast<std::size_t>(edge_arc_[k])];
    return static_cast<int>(a.orig - a.cap);
  }

 private:
  struct Arc {
    std::size_t to;
    int next;
    long cap = 0;
    long orig = 0;
  };

  int add_arc(std::size_t from, std::size_t to) {
    int id = static_cast<int>(arcs_.size());
    arcs_.push_back({to, head_[from]});
    head_[from] = id;
    arcs_.push_back({from, head_[to]});
    head_[to] = id + 1;
    return id;
  }

  bool bfs() {
    level_.assign(head_.size(), -1);
    std::queue<std::size_t> q;
    level_[source_] = 0;
    q.push(source_);
    while (!q.empty()) {
      auto v = q.front();
      q.pop();
      for (int a = head_[v]; a != -1; a = arcs_[static_cast<std::size_t>(a)].next) {
        const auto& arc = arcs_[static_cast<std::size_t>(a)];
        if (arc.cap > 0 && level_[arc.to] < 0) {
          level_[arc.to] = level_[v] + 1;
          q.push(arc.to);
        }
      }
    }
    return level_[sink_] >= 0;
  }

  long dfs(std::size_t v, long pushed) {
    if (v == sink_) return pushed;
    for (int& a = iter_[v]; a != -1; a = arcs_[static_cast<std::size_t>(a)].next) {
      auto& arc = arcs_[static_cast<std::size_t>(a)];
      if (arc.cap > 0 && level_[arc.to] == level_[v] + 1) {
        long got = dfs(arc.to, std::min(pushed, arc.cap));
        if (got > 0) {
          arc.cap -= got;
          arcs_[static_cast<std::size_t>(a ^ 1)].cap += got;
          return got;
        }
      }
    }
    return 0;
  }

  const EdgeSet& e_;
  std::size_t source_ = 0, wildcard_ = 0, first_region_ = 0, sink_ = 0;
  bool with_wildcard_ = false;
  std::vector<Arc> arcs_;
  std::vector<int> head_, iter_, edge_arc_, level_;
};

}  // namespace detail

inline void check_recourse_dims(std::span<const int> x, std::span<const int> d, const EdgeSet& e) {
  if (x.size() != e.n_stations || d.size() != e.n_regions)
    throw DataError("recourse dimensions mismatch: |x|=" + std::to_string(x.size()) +
                    " |d|=" + std::to_string(d.size()) + " for " + std::to_string(e.n_stations) + " stations and " +
                    std::to_string(e.n_regions) + " regions");
}

/// Total unmet demand only. `wildcard` extra ambulances may serve any region
/// (a relaxation used for search bounds).
inline long shortfall_total(std::span<const int> x, std::span<const int> d, const EdgeSet& e, int wildcard = 0) {
  check_recourse_dims(x, d, e);
  long demand = std::accumulate(d.begin(), d.end(), 0L);
  if (demand == 0) return 0;
  detail::RecourseFlow flow(e, wildcard > 0);
  return demand - flow.run(x, d, wildcard);
}

/// Reuses one flow network across many (x, d) evaluations. Not thread-safe;
/// give each worker its own instance.
class ShortfallEvaluator {
 public:
  explicit ShortfallEvaluator(const EdgeSet& e) : edges_(e), flow_(edges_, true) {}
  ShortfallEvaluator(const ShortfallEvaluator& o) : edges_(o.edges_), flow_(edges_, true) {}
  ShortfallEvaluator& operator=(const ShortfallEvaluator&) = delete;

  long operator()(std::span<const int> x, std::span<const int> d, int wildcard = 0) {
    check_recourse_dims(x, d, edges_);
    long demand = std::accumulate(d.begin(), d.end(), 0L);
    if (demand == 0) return 0;
    return demand - flow_.run(x, d, wildcard);
  }

  const EdgeSet& edges() const noexcept { return edges_; }

 private:
  EdgeSet edges_;
  detail::RecourseFlow flow_;
};

/// Minimum shortfall routing for stationing x against demand d over edges E.
inline ShortfallResult min_shortfall(std::span<const int> x, std::span<const int> d, const EdgeSet& e) {
  check_recourse_dims(x, d, e);
  detail::RecourseFlow flow(e, false);
  long served = flow.run(x, d, 0);
  ShortfallResult r;
  r.y.resize(e.edges.size());
  std::vector<int> got(e.n_regions, 0);
  for (std::size_t k = 0; k < e.edges.size(); ++k) {
    r.y[k] = flow.edge_flow(k);
    got[e.edges[k].region] += r.y[k];
  }
  r.z.resize(e.n_regions);
  for (std::size_t j = 0; j < e.n_regions; ++j) r.z[j] = d[j] - got[j];
  r.total = std::accumulate(d.begin(), d.end(), 0L) - served;
  return r;
}

inline std::string flow_edge_list_csv(const EdgeSet& e, const ShortfallResult& r) {
  std::string out = "station,region,flow\n";
  for (std::size_t k = 0; k < e.edges.size(); ++k)
    out += std::to_string(e.edges[k].station) + "," + std::to_string(e.edges[k].region) + "," +
           std::to_string(r.y[k]) + "\n";
  return out;
}

/// Station with at least one available ambulance minimizing travel time to
/// the region; ties go to the lowest index. `coverage`, when given,
/// restricts candidates to feasible edges.
inline std::optional<std::size_t> nearest_available(std::span<const int> available, std::size_t region,
                                                    const Dense<double>& station_region_time,
                                                    const CoverageMatrix* coverage = nullptr) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < available.size(); ++i) {
    if (available[i] < 1) continue;
    if (coverage && !coverage->covers(i, region)) continue;
    if (!best || station_region_time(i, region) < station_region_time(*best, region)) best = i;
  }
  return best;
}

/// Stations x regions travel times.
inline Dense<double> station_region_times(const Grid& g) {
  Dense<double> t(g.num_stations(), g.num_cells());
  for (std::size_t i = 0; i < g.num_stations(); ++i)
    for (std::size_t j = 0; j < g.num_cells(); ++j) t(i, j) = g.station_time(i, j);
  return t;
}

}  // namespace emsdeploy
