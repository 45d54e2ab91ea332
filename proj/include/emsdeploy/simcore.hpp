#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "emsdeploy/calibrate.hpp"
#include "emsdeploy/common.hpp"
#include "emsdeploy/dispatchflow.hpp"
#include "emsdeploy/geogrid.hpp"
#include "emsdeploy/ingest.hpp"
#include "json.hpp"

namespace emsdeploy {

enum class EventKind { NewCall, CallEnroute, CallArriveScene, CallDepartScene, CallArriveHospital, AmbulanceAvailable };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::NewCall: return "NewCall";
    case EventKind::CallEnroute: return "CallEnroute";
    case EventKind::CallArriveScene: return "CallArriveScene";
    case EventKind::CallDepartScene: return "CallDepartScene";
    case EventKind::CallArriveHospital: return "CallArriveHospital";
    case EventKind::AmbulanceAvailable: return "AmbulanceAvailable";
  }
  return "?";
}

enum class AmbulanceStatus { AtStation, Enroute, OnScene, ToHospital, Returning };
inline constexpr std::size_t kStatusCount = 5;

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::NewCall;
  std::size_t call_id = 0;
  long ambulance_id = -1;  // -1 before dispatch
  std::size_t cell = 0;
};

struct AmbulanceState {
  std::size_t id = 0;
  std::size_t home_station = 0;
  AmbulanceStatus status = AmbulanceStatus::AtStation;
  double available_at = 0.0;  // arrival time at home while Returning
  std::size_t location_cell = 0;
};

/// Log-normal service time; mu and sigma refer to ln(minutes).
struct LognormalParams {
  double mu = 3.65;
  double sigma = 0.3;
};

inline double draw_service_time(const LognormalParams& p, Rng& rng) {
  if (p.sigma < 0.0) throw ConfigError("lognormal sigma must be nonnegative");
  if (p.sigma == 0.0) return std::exp(p.mu) * 60.0;
  std::lognormal_distribution<double> dist(p.mu, p.sigma);
  return dist(rng) * 60.0;
}

struct SimParams {
  LognormalParams service;
  double shortfall_threshold_s = kDefaultCoverageThresholdS;
  bool restrict_dispatch_to_coverage = false;  // applies to new calls only
  bool record_events = true;
  bool trace_status = false;
};

/// Everything the simulator needs from the grid, with calibrated times.
struct SimNetwork {
  Dense<double> travel_s;  // cell x cell, already calibrated
  std::vector<std::size_t> station_cells;
  std::vector<std::size_t> hospital_cells;
  Dense<double> station_region_s;
  std::optional<CoverageMatrix> coverage;

  std::size_t num_stations() const noexcept { return station_cells.size(); }
};

inline SimNetwork make_network(const Grid& grid, const CalibrationModel& model = {},
                               double coverage_threshold_s = kDefaultCoverageThresholdS) {
  SimNetwork net;
  std::size_t n = grid.num_cells();
  net.travel_s = Dense<double>(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) net.travel_s(a, b) = a == b ? 0.0 : model.apply(grid.travel_time_s(a, b));
  net.station_cells = grid.station_cells;
  net.hospital_cells = grid.hospital_cells;
  net.station_region_s = Dense<double>(grid.num_stations(), n);
  for (std::size_t i = 0; i < grid.num_stations(); ++i)
    for (std::size_t j = 0; j < n; ++j) net.station_region_s(i, j) = net.travel_s(grid.station_cells[i], j);
  net.coverage = derive_coverage(grid, coverage_threshold_s);
  return net;
}

struct SimCall {
  double time_s = 0.0;
  std::size_t cell = 0;
  friend bool operator==(const SimCall&, const SimCall&) = default;
};

inline std::vector<SimCall> to_sim_calls(std::span<const CallRecord> calls, const Grid& grid,
                                         std::size_t* dropped = nullptr, double snap_cells = 1.0) {
  std::vector<SimCall> out;
  std::size_t skipped = 0;
  for (const auto& c : calls) {
    try {
      out.push_back({c.timestamp, assign_cell(grid, c.lat, c.lon, snap_cells)});
    } catch (const OutOfBounds&) {
      ++skipped;
    }
  }
  if (dropped) *dropped = skipped;
  return out;
}

struct CallOutcome {
  std::size_t call_id = 0;
  double arrival_s = 0.0;
  double dispatch_s = 0.0;
  double dispatch_wait_s = 0.0;
  double travel_s = 0.0;
  double response_s = 0.0;
  long ambulance_id = -1;
  std::size_t station = 0;
  bool shortfall = false;
};

struct SimOutcome {
  std::vector<CallOutcome> calls;
  double mean_response_s = 0.0;
  double shortfall_rate = 0.0;
  std::vector<Event> event_log;
  std::vector<std::array<int, kStatusCount>> status_trace;  // after each event, when traced
  bool hospital_leg_skipped = false;
};

/// Discrete-event run: calls arrive, the closest available ambulance is sent
/// (ties: lowest station, then lowest ambulance id), serves on scene for a
/// log-normal time, transports to the nearest hospital, then takes the
/// oldest waiting call or heads home. Returning ambulances can be dispatched
/// and are treated as already at their station.
inline SimOutcome simulate(std::span<const int> x, std::span<const SimCall> calls, const SimNetwork& net,
                           const SimParams& params, std::uint64_t seed) {
  if (x.size() != net.num_stations()) throw DataError("deployment size does not match station count");
  std::vector<AmbulanceState> fleet;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0) throw DataError("negative ambulance count");
    for (int k = 0; k < x[i]; ++k) fleet.push_back({fleet.size(), i, AmbulanceStatus::AtStation, 0.0, net.station_cells[i]});
  }
  if (fleet.empty()) throw DataError("simulation needs at least one ambulance");
  for (std::size_t c = 1; c < calls.size(); ++c)
    if (calls[c].time_s < calls[c - 1].time_s) throw DataError("calls must be sorted by time");

  // Service draws are tied to call order so policies share random numbers.
  Rng rng(seed);
  std::vector<double> service(calls.size());
  for (auto& s : service) s = draw_service_time(params.service, rng);

  SimOutcome out;
  out.calls.resize(calls.size());
  out.hospital_leg_skipped = net.hospital_cells.empty();

  struct Pending {
    Event ev;
    std::uint64_t seq;
  };
  auto later = [](const Pending& a, const Pending& b) {
    return a.ev.time != b.ev.time ? a.ev.time > b.ev.time : a.seq > b.seq;
  };
  std::priority_queue<Pending, std::vector<Pending>, decltype(later)> queue(later);
  std::uint64_t seq = 0;
  auto push = [&](Event ev) { queue.push({ev, seq++}); };
  for (std::size_t c = 0; c < calls.size(); ++c) push({calls[c].time_s, EventKind::NewCall, c, -1, calls[c].cell});

  std::deque<std::size_t> waiting;
  std::vector<std::size_t> serving(fleet.size(), 0);
  std::vector<int> available(x.size(), 0);

  auto is_available = [](const AmbulanceState& a) {
    return a.status == AmbulanceStatus::AtStation || a.status == AmbulanceStatus::Returning;
  };
  auto dispatch = [&](std::size_t call, AmbulanceState& amb, double now) {
    auto& rec = out.calls[call];
    rec.call_id = call;
    rec.arrival_s = calls[call].time_s;
    rec.dispatch_s = now;
    rec.dispatch_wait_s = now - calls[call].time_s;
    rec.travel_s = net.travel_s(amb.location_cell, calls[call].cell);
    rec.response_s = rec.dispatch_wait_s + rec.travel_s;
    rec.ambulance_id = static_cast<long>(amb.id);
    rec.station = amb.home_station;
    rec.shortfall = rec.response_s > params.shortfall_threshold_s;
    amb.status = AmbulanceStatus::Enroute;
    serving[amb.id] = call;
    push({now, EventKind::CallEnroute, call, static_cast<long>(amb.id), amb.location_cell});
  };

  while (!queue.empty()) {
    Event ev = queue.top().ev;
    queue.pop();
    const double now = ev.time;
    switch (ev.kind) {
      case EventKind::NewCall: {
        std::fill(available.begin(), available.end(), 0);
        for (const auto& a : fleet)
          if (is_available(a)) ++available[a.home_station];
        auto station = nearest_available(available, calls[ev.call_id].cell, net.station_region_s,
                                         params.restrict_dispatch_to_coverage && net.coverage ? &*net.coverage : nullptr);
        if (!station) {
          waiting.push_back(ev.call_id);
          break;
        }
        for (auto& a : fleet)
          if (a.home_station == *station && is_available(a)) {
            a.location_cell = net.station_cells[a.home_station];
            dispatch(ev.call_id, a, now);
            break;
          }
        break;
      }
      case EventKind::CallEnroute: {
        const auto& rec = out.calls[ev.call_id];
        push({now + rec.travel_s, EventKind::CallArriveScene, ev.call_id, ev.ambulance_id, calls[ev.call_id].cell});
        break;
      }
      case EventKind::CallArriveScene: {
        auto& amb = fleet[static_cast<std::size_t>(ev.ambulance_id)];
        amb.status = AmbulanceStatus::OnScene;
        amb.location_cell = calls[ev.call_id].cell;
        push({now + service[ev.call_id], EventKind::CallDepartScene, ev.call_id, ev.ambulance_id, amb.location_cell});
        break;
      }
      case EventKind::CallDepartScene: {
        auto& amb = fleet[static_cast<std::size_t>(ev.ambulance_id)];
        amb.status = AmbulanceStatus::ToHospital;
        std::size_t dest = amb.location_cell;
        double leg = 0.0;
        if (!net.hospital_cells.empty()) {
          dest = net.hospital_cells[0];
          leg = net.travel_s(amb.location_cell, dest);
          for (auto h : net.hospital_cells) {
            double t = net.travel_s(amb.location_cell, h);
            if (t < leg) {
              leg = t;
              dest = h;
            }
          }
        }
        push({now + leg, EventKind::CallArriveHospital, ev.call_id, ev.ambulance_id, dest});
        break;
      }
      case EventKind::CallArriveHospital: {
        auto& amb = fleet[static_cast<std::size_t>(ev.ambulance_id)];
        amb.location_cell = ev.cell;
        push({now, EventKind::AmbulanceAvailable, ev.call_id, ev.ambulance_id, ev.cell});
        break;
      }
      case EventKind::AmbulanceAvailable: {
        auto& amb = fleet[static_cast<std::size_t>(ev.ambulance_id)];
        if (!waiting.empty()) {
          auto next = waiting.front();
          waiting.pop_front();
          dispatch(next, amb, now);
        } else {
          std::size_t home = net.station_cells[amb.home_station];
          amb.status = AmbulanceStatus::Returning;
          amb.available_at = now + net.travel_s(amb.location_cell, home);
          amb.location_cell = home;
        }
        break;
      }
    }
    if (params.record_events) out.event_log.push_back(ev);
    if (params.trace_status) {
      std::array<int, kStatusCount> counts{};
      for (const auto& a : fleet) {
        auto s = a.status;
        if (s == AmbulanceStatus::Returning && now >= a.available_at) s = AmbulanceStatus::AtStation;
        ++counts[static_cast<std::size_t>(s)];
      }
      out.status_trace.push_back(counts);
    }
  }

  double total = 0.0;
  std::size_t late = 0;
  for (const auto& r : out.calls) {
    total += r.response_s;
    late += r.shortfall ? 1 : 0;
  }
  if (!calls.empty()) {
    out.mean_response_s = total / static_cast<double>(calls.size());
    out.shortfall_rate = static_cast<double>(late) / static_cast<double>(calls.size());
  }
  return out;
}

inline std::string event_log_csv(const SimOutcome& o) {
  std::string out = "time_s,kind,call_id,ambulance_id,cell\n";
  for (const auto& e : o.event_log)
    out += format_double(e.time) + "," + to_string(e.kind) + "," + std::to_string(e.call_id) + "," +
           std::to_string(e.ambulance_id) + "," + std::to_string(e.cell) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Multiple replication batches

struct BatchConfig {
  std::size_t n_calls = 1000;
  std::size_t n_batches = 12;
  bool resample = false;  // sample calls with replacement instead of slicing
};

struct BatchSummary {
  std::vector<double> batch_means_s;
  double mean_s = 0.0;
  double std_s = 0.0;
  bool single_batch = false;
};

/// "6.210 +/- 0.037" in minutes.
inline std::string format_mean_std_minutes(double mean_s, double std_s) {
  return format_fixed(mean_s / 60.0, 3) + " +/- " + format_fixed(std_s / 60.0, 3);
}

inline BatchSummary summarize_batches(std::vector<double> means) {
  BatchSummary s;
  s.batch_means_s = std::move(means);
  s.mean_s = mean_of(s.batch_means_s);
  s.single_batch = s.batch_means_s.size() == 1;
  s.std_s = s.single_batch ? 0.0 : sample_std(s.batch_means_s);
  return s;
}

/// The calls making up batch b: a contiguous slice, or a seeded resample.
inline std::vector<SimCall> batch_calls(std::span<const SimCall> calls, const BatchConfig& cfg, std::size_t b,
                                        std::uint64_t seed) {
  if (!cfg.resample) {
    if (cfg.n_calls * cfg.n_batches > calls.size())
      throw DataError("need " + std::to_string(cfg.n_calls * cfg.n_batches) + " calls for " +
                      std::to_string(cfg.n_batches) + " batches, have " + std::to_string(calls.size()));
    return {calls.begin() + static_cast<long>(b * cfg.n_calls), calls.begin() + static_cast<long>((b + 1) * cfg.n_calls)};
  }
  if (calls.empty()) throw DataError("cannot resample from an empty call list");
  auto rng = make_rng(seed, "resample", b);
  std::uniform_int_distribution<std::size_t> pick(0, calls.size() - 1);
  std::vector<std::size_t> idx(cfg.n_calls);
  for (auto& i : idx) i = pick(rng);
  std::sort(idx.begin(), idx.end());
  std::vector<SimCall> out;
  for (auto i : idx) out.push_back(calls[i]);
  return out;
}

struct BatchRun {
  std::vector<SimOutcome> outcomes;
  BatchSummary summary;
};

inline BatchRun run_batches(std::span<const int> x, std::span<const SimCall> calls, const SimNetwork& net,
                            const SimParams& params, const BatchConfig& cfg, std::uint64_t seed) {
  if (cfg.n_batches == 0 || cfg.n_calls == 0) throw ConfigError("batch count and size must be positive");
  BatchRun run;
  std::vector<double> means;
  for (std::size_t b = 0; b < cfg.n_batches; ++b) {
    auto slice = batch_calls(calls, cfg, b, seed);
    run.outcomes.push_back(simulate(x, slice, net, params, derive_seed(seed, "service", b)));
    means.push_back(run.outcomes.back().mean_response_s);
  }
  run.summary = summarize_batches(std::move(means));
  return run;
}

struct Policy {
  std::string label;
  std::vector<int> x;
};

struct PolicyComparison {
  std::vector<std::string> labels;
  std::vector<BatchSummary> summaries;  // aligned with labels
};

/// Runs every policy on identical batches and service draws.
inline PolicyComparison compare_policies(std::span<const Policy> policies, std::span<const SimCall> calls,
                                         const SimNetwork& net, const SimParams& params, const BatchConfig& cfg,
                                         std::uint64_t seed) {
  if (policies.empty()) throw ConfigError("compare_policies needs at least one policy");
  SimParams quiet = params;
  quiet.record_events = false;
  quiet.trace_status = false;
  PolicyComparison cmp;
  for (const auto& p : policies) {
    cmp.labels.push_back(p.label);
    cmp.summaries.push_back(run_batches(p.x, calls, net, quiet, cfg, seed).summary);
  }
  return cmp;
}

/// Table-style summary: per-batch MRT in minutes per policy, then overall.
inline nlohmann::json comparison_to_json(const PolicyComparison& cmp) {
  nlohmann::json j;
  j["policies"] = cmp.labels;
  auto rows = nlohmann::json::array();
  std::size_t nb = cmp.summaries.empty() ? 0 : cmp.summaries[0].batch_means_s.size();
  for (std::size_t b = 0; b < nb; ++b) {
    nlohmann::json row;
    row["batch"] = b + 1;
    for (std::size_t p = 0; p < cmp.labels.size(); ++p)
      row[cmp.labels[p]] = cmp.summaries[p].batch_means_s[b] / 60.0;
    rows.push_back(row);
  }
  j["batches"] = rows;
  nlohmann::json overall;
  for (std::size_t p = 0; p < cmp.labels.size(); ++p)
    overall[cmp.labels[p]] = {{"mean_min", cmp.summaries[p].mean_s / 60.0},
                              {"std_min", cmp.summaries[p].std_s / 60.0},
                              {"formatted", format_mean_std_minutes(cmp.summaries[p].mean_s, cmp.summaries[p].std_s)},
                              {"single_batch", cmp.summaries[p].single_batch}};
  j["overall"] = overall;
  return j;
}

}  // namespace emsdeploy
