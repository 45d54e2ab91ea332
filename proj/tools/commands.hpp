#pragma once

#include <spdlog/spdlog.h>

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "emsdeploy/emsdeploy.hpp"
#include "emsdeploy/synthetic.hpp"
#include "run_config.hpp"

namespace emsdeploy::cli {

// ---------------------------------------------------------------------------
// shared helpers

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

inline std::string join_ints(std::span<const int> x) {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? " " : "") + std::to_string(x[i]);
  return s;
}

inline Grid load_run_grid(Run& run) {
  auto p = run.need("grid.json", "grid");
  run.need("grid_travel.csv", "grid");
  return load_grid(p);
}

inline std::vector<CallRecord> load_split(Run& run, const std::string& name) {
  return parse_calls(run.need(name, "preprocess").string()).calls;
}

inline std::vector<CallRecord> load_all_calls(Run& run) {
  auto calls = load_split(run, "train_calls.csv");
  auto test = load_split(run, "test_calls.csv");
  calls.insert(calls.end(), test.begin(), test.end());
  return calls;
}

inline PeakWindow peak_window(const RunConfig& c) { return {c.num("peak_start_h") * 3600.0, c.num("peak_end_h") * 3600.0}; }

inline DemandBuild demand_from(std::span<const CallRecord> calls, const Grid& grid, const RunConfig& c) {
  TimeZone zone(c.str("zone"));
  DemandBuildOptions opts;
  opts.snap_cells = c.num("snap_cells");
  opts.zone = &zone;
  if (c.flag("peak_only")) opts.keep_period = peak_period_filter(peak_window(c));
  return build_demand_matrix(calls, grid, c.num("period_s"), opts);
}

inline EdgeSet run_edges(const Grid& grid, const RunConfig& c) {
  return EdgeSet::from_coverage(derive_coverage(grid, c.num("coverage_threshold_s")));
}

inline SearchConfig search_config(const RunConfig& c) { return {c.count("max_nodes"), 1e-9}; }

inline CcgConfig ccg_config(const RunConfig& c) {
  return {c.num("epsilon"), c.count("max_iter"), c.num("enumeration_budget"), search_config(c)};
}

inline SimParams sim_params(const RunConfig& c) {
  SimParams p;
  p.service = {c.num("mu"), c.num("sigma")};
  p.shortfall_threshold_s = c.num("coverage_threshold_s");
  p.restrict_dispatch_to_coverage = c.flag("restrict_dispatch");
  return p;
}

inline BatchConfig batch_config(const RunConfig& c) { return {c.count("n_calls"), c.count("n_batches"), c.flag("resample")}; }

inline CalibrationModel load_calibration(Run& run) { return calibration_from_json(read_json(run.need("calibration.json", "fit"))); }

inline UncertaintySet load_set(Run& run, const Grid& grid) {
  auto j = read_json(run.need("uncertainty_set.json", "fit"));
  auto set = uncertainty_set_from_json(j, derive_adjacency(grid), derive_region_ball(grid, run.cfg().num("coverage_threshold_s")));
  if (set.regions() != grid.num_cells()) throw DataError("uncertainty set does not match the grid; rerun fit");
  return set;
}

/// n ambulances spread as evenly as possible, remainder to the lowest stations.
inline std::vector<int> even_deployment(std::size_t stations, int n) {
  std::vector<int> x(stations, stations ? n / static_cast<int>(stations) : 0);
  for (std::size_t i = 0; i < stations && i < static_cast<std::size_t>(n % static_cast<int>(stations)); ++i) ++x[i];
  return x;
}

/// Every station within one ambulance of every other.
inline bool saturated(std::span<const int> x) {
  if (x.empty()) return true;
  auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo <= 1;
}

inline void check_fleet(const Grid& grid, int n) {
  if (grid.num_stations() == 0) throw ConfigError("grid has no stations");
  if (n < 1) throw ConfigError("fleet size must be at least 1");
}

// ---------------------------------------------------------------------------
// grid

inline void cmd_grid(Run& run) {
  const auto& c = run.cfg();
  auto b = c.list("bounds");
  Bounds bounds{b[0], b[1], b[2], b[3]};
  auto rows = c.count("rows"), cols = c.count("cols");
  auto to_cells = [](const std::vector<double>& v) {
    std::vector<std::size_t> out;
    for (double d : v) {
      if (!(d >= 0.0) || std::floor(d) != d) throw ConfigError("cell indices must be nonnegative integers");
      out.push_back(static_cast<std::size_t>(d));
    }
    return out;
  };
  auto stations = to_cells(c.list("stations"));
  if (stations.empty()) stations = spread_cells(rows * cols, c.count("n_stations"));
  auto hospitals = to_cells(c.list("hospitals"));
  Grid g = c.str("travel_provider") == "matrix"
               ? build_grid(bounds, rows, cols, MatrixProvider{load_travel_matrix(run.input("travel_matrix").string())},
                            stations, hospitals)
               : build_grid(bounds, rows, cols, SyntheticSpeedProvider{c.num("speed_kmh")}, stations, hospitals);
  save_grid(g, run.out() / "grid.json");
  run.wrote("grid.json");
  run.wrote("grid_travel.csv");
  double thr = c.num("coverage_threshold_s");
  run.write("adjacency.csv", bool_matrix_csv(derive_adjacency(g)));
  run.write("coverage.csv", bool_matrix_csv(derive_coverage(g, thr).entries));
  run.write("region_ball.csv", bool_matrix_csv(derive_region_ball(g, thr)));
  spdlog::info("grid: {}x{} cells, {} stations, {} hospitals", rows, cols, g.num_stations(), g.hospital_cells.size());
}

// ---------------------------------------------------------------------------
// preprocess

inline CallSchema schema_from(const RunConfig& c) {
  CallSchema s;
  s.datetime = c.str("col_datetime");
  s.latitude = c.str("col_latitude");
  s.longitude = c.str("col_longitude");
  s.response_time = c.str("col_response_time");
  s.travel_time = c.str("col_travel_time");
  s.amb_latitude = c.str("col_amb_latitude");
  s.amb_longitude = c.str("col_amb_longitude");
  s.on_scene = c.str("col_on_scene");
  s.to_hospital = c.str("col_to_hospital");
  s.zone = c.str("zone");
  s.timestamp_format = c.str("timestamp_format");
  return s;
}

inline void cmd_preprocess(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  auto parsed = parse_calls(run.input("calls").string(), schema_from(c));
  for (const auto& r : parsed.drop_reasons) spdlog::debug("dropped {}", r);
  if (parsed.dropped) spdlog::warn("preprocess: dropped {} malformed rows", parsed.dropped);
  auto calls = c.flag("peak_only") ? filter_peak(parsed.calls, peak_window(c)) : parsed.calls;
  if (calls.size() < 2) throw DataError("need at least 2 calls after filtering, have " + std::to_string(calls.size()));
  auto [train, test] = split_train_test<CallRecord>(calls, Chronological{c.num("train_fraction")});
  auto demand = demand_from(train, grid, c);
  if (demand.matrix.counts.rows() == 0) throw DataError("no demand periods in the training calls");
  run.write("train_calls.csv", serialize_calls(train));
  run.write("test_calls.csv", serialize_calls(test));
  run.write("demand.csv", demand_matrix_csv(demand.matrix));
  run.write_json("preprocess.json", {{"parsed", parsed.calls.size()},
                                     {"dropped_malformed", parsed.dropped},
                                     {"kept_after_peak_filter", calls.size()},
                                     {"train", train.size()},
                                     {"test", test.size()},
                                     {"demand_periods", demand.matrix.counts.rows()},
                                     {"dropped_out_of_bounds", demand.dropped_out_of_bounds},
                                     {"dropped_outside_periods", demand.dropped_outside_periods}});
  spdlog::info("preprocess: {} train / {} test calls, {} demand periods", train.size(), test.size(),
               demand.matrix.counts.rows());
}

// ---------------------------------------------------------------------------
// fit

inline void cmd_fit(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  auto demand = load_demand_matrix(run.need("demand.csv", "preprocess").string(), c.num("period_s"));
  if (demand.counts.cols() != grid.num_cells()) throw DataError("demand matrix does not match the grid; rerun preprocess");
  auto adj = derive_adjacency(grid);
  auto ball = derive_region_ball(grid, c.num("coverage_threshold_s"));
  auto rates = fit_rates(demand, adj, ball);
  auto set = build_uncertainty_set(rates, c.num("alpha"), adj, ball);
  run.write_json("rates.json", {{"single", rates.single},
                                {"local", rates.local},
                                {"regional", rates.regional},
                                {"global", rates.global}});
  run.write_json("uncertainty_set.json", uncertainty_set_to_json(set));

  auto kind = calibration_kind_from_string(c.str("calibration"));
  CalibrationModel model;
  if (kind != CalibrationKind::identity) {
    auto train = load_split(run, "train_calls.csv");
    std::size_t excluded = 0;
    auto pairs = calibration_pairs(train, grid, &excluded, c.num("snap_cells"));
    if (excluded) spdlog::info("fit: {} calls without reported travel fields excluded from calibration", excluded);
    model = kind == CalibrationKind::loglog ? fit_loglog(pairs, c.num("trim_p")) : fit_linear(pairs, c.num("trim_p"));
    spdlog::info("fit: calibration a={} b={} r2={}", model.a, model.b, model.r_squared);
  }
  run.write_json("calibration.json", calibration_to_json(model));
}

// ---------------------------------------------------------------------------
// optimize

inline bool wants(const RunConfig& c, const std::string& model) {
  auto m = c.str("model");
  if (m == "all") return true;
  if (m == "both") return model == "stochastic" || model == "robust";
  return m == model;
}

inline void cmd_optimize(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  int n = c.integer("n");
  check_fleet(grid, n);
  auto e = run_edges(grid, c);
  std::optional<ScenarioSet> scenarios;
  auto get_scenarios = [&]() -> const ScenarioSet& {
    if (!scenarios) {
      auto demand = load_demand_matrix(run.need("demand.csv", "preprocess").string(), c.num("period_s"));
      scenarios = sample_scenarios(demand, c.count("M"), c.seed());
    }
    return *scenarios;
  };
  if (wants(c, "stochastic")) {
    auto sol = solve_stochastic(get_scenarios(), n, e, search_config(c));
    run.write_json("stochastic.json", stochastic_solution_to_json(sol, c.count("M"), c.seed()));
    spdlog::info("optimize: stochastic x=[{}] objective={} ({})", join_ints(sol.x_star.x), sol.objective,
                 sol.optimality.describe());
  }
  if (wants(c, "robust") || wants(c, "hybrid")) {
    auto set = load_set(run, grid);
    if (wants(c, "robust")) {
      auto sol = solve_robust_ccg(set, n, e, ccg_config(c));
      if (!sol.converged) spdlog::warn("optimize: CCG stopped after {} iterations without closing the gap", sol.state.iterations);
      auto j = robust_solution_to_json(sol, set.alpha);
      j["master_exact"] = sol.master_exact;
      j["n"] = n;
      run.write_json("robust.json", j);
      run.write("ccg_history.csv", ccg_history_csv(sol.state));
      spdlog::info("optimize: robust x=[{}] worst case={}", join_ints(sol.x_star.x), sol.worst_case_shortfall);
    }
    if (wants(c, "hybrid")) {
      auto sol = solve_robust_saa_hybrid(set, get_scenarios(), n, e, c.num("lambda"), ccg_config(c));
      run.write_json("hybrid.json", {{"x", sol.x_star.x},
                                     {"n", n},
                                     {"lambda", c.num("lambda")},
                                     {"objective", sol.objective},
                                     {"worst_case", sol.worst_case},
                                     {"mean_shortfall", sol.mean_shortfall},
                                     {"optimality_flag", sol.optimality.describe()}});
      spdlog::info("optimize: hybrid x=[{}] objective={}", join_ints(sol.x_star.x), sol.objective);
    }
  }
}

// ---------------------------------------------------------------------------
// simulate

inline std::vector<Policy> load_policies(Run& run, const Grid& grid, int n) {
  std::vector<Policy> policies;
  for (const char* label : {"stochastic", "robust", "hybrid"}) {
    std::string file = std::string(label) + ".json";
    if (!run.has(file)) continue;
    auto x = read_json(run.need(file, "optimize")).at("x").get<std::vector<int>>();
    if (x.size() != grid.num_stations()) throw DataError(file + " does not match the grid's stations; rerun optimize");
    policies.push_back({label, x});
  }
  if (policies.empty()) throw DependencyError("stochastic.json or robust.json", "optimize");
  policies.push_back({"even", even_deployment(grid.num_stations(), n)});
  return policies;
}

/// Calls inside the grid, paired with their reported response times.
struct LocatedCalls {
  std::vector<SimCall> sim;
  std::vector<std::optional<double>> reported;
  std::size_t dropped = 0;
};

inline LocatedCalls locate(std::span<const CallRecord> calls, const Grid& grid, double snap) {
  LocatedCalls out;
  for (const auto& c : calls) {
    try {
      out.sim.push_back({c.timestamp, assign_cell(grid, c.lat, c.lon, snap)});
      out.reported.push_back(c.reported_response_s);
    } catch (const OutOfBounds&) {
      ++out.dropped;
    }
  }
  return out;
}

inline void cmd_simulate(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  int n = c.integer("n");
  check_fleet(grid, n);
  auto policies = load_policies(run, grid, n);
  for (const auto& p : policies) {
    int total = std::accumulate(p.x.begin(), p.x.end(), 0);
    if (total != n) spdlog::warn("simulate: policy {} stations {} ambulances, config n is {}", p.label, total, n);
  }
  auto net = make_network(grid, load_calibration(run), c.num("coverage_threshold_s"));
  auto located = locate(load_split(run, "test_calls.csv"), grid, c.num("snap_cells"));
  if (located.dropped) spdlog::info("simulate: {} test calls outside the grid skipped", located.dropped);
  auto params = sim_params(c);
  auto bc = batch_config(c);
  auto cmp = compare_policies(policies, located.sim, net, params, bc, c.seed());

  auto j = comparison_to_json(cmp);
  // Reported response per batch, when batches are contiguous slices.
  std::vector<std::optional<double>> reported(bc.n_batches);
  if (!bc.resample) {
    for (std::size_t b = 0; b < bc.n_batches; ++b) {
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t i = b * bc.n_calls; i < (b + 1) * bc.n_calls; ++i)
        if (located.reported[i]) {
          s += *located.reported[i];
          ++k;
        }
      if (k) reported[b] = s / static_cast<double>(k);
    }
  }
  std::string csv = "batch";
  for (const auto& l : cmp.labels) csv += "," + l + "_min";
  csv += ",reported_min\n";
  for (std::size_t b = 0; b < bc.n_batches; ++b) {
    csv += std::to_string(b + 1);
    for (const auto& s : cmp.summaries) csv += "," + format_fixed(s.batch_means_s[b] / 60.0, 4);
    csv += "," + (reported[b] ? format_fixed(*reported[b] / 60.0, 4) : std::string()) + "\n";
    j["batches"][b]["reported"] = reported[b] ? json(*reported[b] / 60.0) : json(nullptr);
  }
  std::vector<double> rep_means;
  for (const auto& r : reported)
    if (r) rep_means.push_back(*r);
  if (rep_means.size() == bc.n_batches) {
    auto s = summarize_batches(rep_means);
    j["overall"]["reported"] = {{"mean_min", s.mean_s / 60.0},
                                {"std_min", s.std_s / 60.0},
                                {"formatted", format_mean_std_minutes(s.mean_s, s.std_s)},
                                {"single_batch", s.single_batch}};
  }
  j["stationing"] = json::object();
  for (const auto& p : policies) j["stationing"][p.label] = p.x;
  run.write_json("simulation.json", j);
  run.write("simulation_batches.csv", csv);

  // Event log of the first batch, same draws as the batch run.
  auto first = batch_calls(located.sim, bc, 0, c.seed());
  for (const auto& p : policies) {
    auto out = simulate(p.x, first, net, params, derive_seed(c.seed(), "service", 0));
    run.write("events_" + p.label + ".csv", event_log_csv(out));
  }
  for (std::size_t p = 0; p < cmp.labels.size(); ++p)
    spdlog::info("simulate: {} {}", cmp.labels[p], format_mean_std_minutes(cmp.summaries[p].mean_s, cmp.summaries[p].std_s));
}

// ---------------------------------------------------------------------------
// verify

inline json report_json(const VerificationReport& r) {
  return {{"batch_errors_s", r.batch_errors_s},
          {"mean_error_s", r.mean_error_s},
          {"std_error_s", r.std_error_s},
          {"n_batches", r.n_batches},
          {"batch_size", r.batch_size},
          {"excluded", r.excluded}};
}

inline void cmd_verify(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  auto model = load_calibration(run);
  auto test = load_split(run, "test_calls.csv");
  auto bs = c.count("verify_batch_size"), nb = c.count("verify_batches");
  auto calibrated = verify(test, grid, model, bs, nb);
  auto raw = verify(test, grid, identity_calibration(), bs, nb);
  run.write_json("verification.json", {{"calibration", calibration_to_json(model)},
                                       {"calibrated", report_json(calibrated)},
                                       {"uncalibrated", report_json(raw)}});
  std::string csv = "grid_s,calibrated_s,reported_s\n";
  for (const auto& p : calibration_pairs(test, grid))
    csv += format_double(p.grid_s) + "," + format_double(model.apply(p.grid_s)) + "," + format_double(p.reported_s) + "\n";
  run.write("verification_points.csv", csv);
  spdlog::info("verify: mean error {} +/- {} s (uncalibrated {} s)", calibrated.mean_error_s, calibrated.std_error_s,
               raw.mean_error_s);
}

// ---------------------------------------------------------------------------
// alpha-cv

inline void cmd_alpha_cv(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  int n = c.integer("n");
  check_fleet(grid, n);
  auto calls = load_all_calls(run);
  std::size_t k = c.count("folds");
  if (calls.size() < k) throw DataError("fewer calls than folds");
  auto net = make_network(grid, load_calibration(run), c.num("coverage_threshold_s"));
  auto e = run_edges(grid, c);
  auto adj = derive_adjacency(grid);
  auto ball = derive_region_ball(grid, c.num("coverage_threshold_s"));
  auto alphas = c.list("alphas");
  auto params = sim_params(c);
  params.record_events = false;

  // Contiguous chronological blocks; fold f tests on block f.
  struct Cell {
    std::optional<double> mrt_min;
    std::vector<int> x;
    std::string error;
  };
  std::vector<std::vector<Cell>> table(alphas.size(), std::vector<Cell>(k));
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t lo = f * calls.size() / k, hi = (f + 1) * calls.size() / k;
    std::vector<CallRecord> train(calls.begin(), calls.begin() + static_cast<long>(lo));
    train.insert(train.end(), calls.begin() + static_cast<long>(hi), calls.end());
    std::vector<CallRecord> test(calls.begin() + static_cast<long>(lo), calls.begin() + static_cast<long>(hi));
    auto sim_calls = locate(test, grid, c.num("snap_cells")).sim;
    std::optional<PoissonRates> rates;
    std::string fold_error;
    try {
      auto demand = demand_from(train, grid, c);
      if (demand.matrix.counts.rows() == 0) throw DataError("no demand periods in training folds");
      rates = fit_rates(demand.matrix, adj, ball);
    } catch (const Error& ex) {
      fold_error = ex.what();
    }
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      auto& cell = table[a][f];
      if (!rates) {
        cell.error = fold_error;
        continue;
      }
      try {
        auto set = build_uncertainty_set(*rates, alphas[a], adj, ball);
        auto sol = solve_robust_ccg(set, n, e, ccg_config(c));
        if (!sol.converged) throw SolverError("CCG did not converge");
        cell.x = sol.x_star.x;
        auto out = simulate(cell.x, sim_calls, net, params, derive_seed(c.seed(), "service", f));
        cell.mrt_min = out.mean_response_s / 60.0;
      } catch (const Error& ex) {
        cell.error = ex.what();
        spdlog::warn("alpha-cv: alpha={} fold={}: {}", alphas[a], f + 1, ex.what());
      }
    }
  }

  std::string csv = "alpha";
  for (std::size_t f = 0; f < k; ++f) csv += ",fold" + std::to_string(f + 1) + "_min";
  csv += ",mean_min,saturated\n";
  json rows = json::array();
  std::optional<std::size_t> best;
  std::vector<double> means(alphas.size(), 0.0);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    bool complete = true, sat = true;
    double sum = 0.0;
    json row{{"alpha", alphas[a]}, {"folds", json::array()}};
    csv += format_double(alphas[a]);
    for (std::size_t f = 0; f < k; ++f) {
      const auto& cell = table[a][f];
      csv += "," + (cell.mrt_min ? format_fixed(*cell.mrt_min, 4) : std::string("error"));
      json jc{{"mrt_min", cell.mrt_min ? json(*cell.mrt_min) : json(nullptr)}, {"x", cell.x}};
      if (!cell.error.empty()) jc["error"] = cell.error;
      row["folds"].push_back(jc);
      if (cell.mrt_min) {
        sum += *cell.mrt_min;
        sat = sat && saturated(cell.x);
      } else {
        complete = false;
      }
    }
    means[a] = sum / static_cast<double>(k);
    csv += "," + (complete ? format_fixed(means[a], 4) : std::string()) + "," + (sat ? "true" : "false") + "\n";
    row["mean_min"] = complete ? json(means[a]) : json(nullptr);
    row["saturated"] = sat;
    rows.push_back(row);
    if (complete && !sat && (!best || means[a] < means[*best])) best = a;
  }
  run.write("alpha_cv.csv", csv);
  run.write_json("alpha_cv.json", {{"folds", k},
                                   {"rows", rows},
                                   {"recommended_alpha", best ? json(alphas[*best]) : json(nullptr)}});
  if (best)
    spdlog::info("alpha-cv: recommended alpha {}", alphas[*best]);
  else
    spdlog::warn("alpha-cv: every alpha is saturated or failed; no recommendation");
}

// ---------------------------------------------------------------------------
// fleet-sweep

inline void cmd_fleet_sweep(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  auto n_min = c.integer("n_min"), n_max = c.integer("n_max");
  check_fleet(grid, n_min);
  auto e = run_edges(grid, c);
  auto demand = load_demand_matrix(run.need("demand.csv", "preprocess").string(), c.num("period_s"));
  auto scenarios = sample_scenarios(demand, c.count("M"), c.seed());
  auto set = load_set(run, grid);
  auto net = make_network(grid, load_calibration(run), c.num("coverage_threshold_s"));
  auto located = locate(load_split(run, "test_calls.csv"), grid, c.num("snap_cells"));
  auto params = sim_params(c);
  auto bc = batch_config(c);
  std::string csv = "n,stochastic_mrt_min,robust_mrt_min\n";
  json points = json::array();
  for (int n = n_min; n <= n_max; ++n) {
    auto st = solve_stochastic(scenarios, n, e, search_config(c));
    auto rb = solve_robust_ccg(set, n, e, ccg_config(c));
    std::vector<Policy> policies{{"stochastic", st.x_star.x}, {"robust", rb.x_star.x}};
    auto cmp = compare_policies(policies, located.sim, net, params, bc, c.seed());
    double s = cmp.summaries[0].mean_s / 60.0, r = cmp.summaries[1].mean_s / 60.0;
    csv += std::to_string(n) + "," + format_fixed(s, 4) + "," + format_fixed(r, 4) + "\n";
    points.push_back({{"n", n},
                      {"stochastic", {{"x", st.x_star.x}, {"mrt_min", s}, {"std_min", cmp.summaries[0].std_s / 60.0}}},
                      {"robust", {{"x", rb.x_star.x}, {"mrt_min", r}, {"std_min", cmp.summaries[1].std_s / 60.0}, {"converged", rb.converged}}}});
    spdlog::info("fleet-sweep: n={} stochastic {:.3f} min, robust {:.3f} min", n, s, r);
  }
  run.write("fleet_sweep.csv", csv);
  run.write_json("fleet_sweep.json", points);
}

// ---------------------------------------------------------------------------
// analyze

inline void cmd_analyze(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  auto calls = load_all_calls(run);
  auto svi = load_svi_table(run.input("svi").string());
  auto tracts = load_tract_map(run.input("tract_map").string());
  auto ds = assemble_tracts(calls, grid, tracts, svi, c.num("snap_cells"));
  if (ds.dropped_missing_svi) spdlog::warn("analyze: {} tracts without SVI rows dropped", ds.dropped_missing_svi);
  std::size_t k = c.count("analysis_folds");
  if (ds.rows() < k) throw DataError("analysis needs at least " + std::to_string(k) + " tracts, have " + std::to_string(ds.rows()));
  auto grid_l = c.list("lambda_grid");
  auto reports = compare_models(ds, k, derive_seed(c.seed(), "folds"), grid_l.empty() ? default_lambda_grid() : grid_l);
  run.write("models.csv", model_reports_csv(reports));
  json j = json::array();
  for (const auto& r : reports)
    j.push_back({{"model", r.label},
                 {"variables", r.variables},
                 {"fold_mse", r.fold_mse},
                 {"average_mse", r.average_mse},
                 {"rank", r.rank},
                 {"chosen_lambda", r.chosen_lambda}});
  run.write_json("models.json", {{"folds", k}, {"tracts", ds.rows()}, {"models", j}});
  std::string csv = "tract_id,mean_reported_min,min_station_time_min,avg_station_time_min\n";
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    csv += csv_escape(ds.tract_ids[i]) + "," + format_double(ds.y(r)) + "," +
           format_double(ds.features(r, kMinTimeColumn)) + "," + format_double(ds.features(r, kAvgTimeColumn)) + "\n";
  }
  run.write("tracts.csv", csv);
  for (const auto& r : reports) spdlog::info("analyze: {} [{}] MSE {:.4f} rank {}", r.label, r.variables, r.average_mse, r.rank);
}

// ---------------------------------------------------------------------------
// plotdata

inline void cmd_plotdata(Run& run) {
  const auto& c = run.cfg();
  Grid grid = load_run_grid(run);
  auto calls = load_all_calls(run);

  // temporal heatmap: ISO weekday x local hour
  std::vector<long> temporal(7 * 24, 0);
  for (const auto& call : calls) {
    double local = call.local_time();
    auto hour = static_cast<std::size_t>(seconds_of_day(local) / 3600.0);
    ++temporal[(iso_weekday(local) - 1) * 24 + std::min<std::size_t>(hour, 23)];
  }
  std::string csv = "weekday,hour,count\n";
  for (std::size_t d = 0; d < 7; ++d)
    for (std::size_t h = 0; h < 24; ++h)
      csv += std::to_string(d + 1) + "," + std::to_string(h) + "," + std::to_string(temporal[d * 24 + h]) + "\n";
  run.write("temporal_heatmap.csv", csv);

  std::vector<long> spatial(grid.num_cells(), 0);
  std::size_t outside = 0;
  for (const auto& call : calls) {
    try {
      ++spatial[assign_cell(grid, call.lat, call.lon, c.num("snap_cells"))];
    } catch (const OutOfBounds&) {
      ++outside;
    }
  }
  csv = "cell,lat,lon,count\n";
  for (std::size_t j = 0; j < grid.num_cells(); ++j)
    csv += std::to_string(j) + "," + format_double(grid.cell_centers[j].lat) + "," +
           format_double(grid.cell_centers[j].lon) + "," + std::to_string(spatial[j]) + "\n";
  run.write("spatial_heatmap.csv", csv);
  if (outside) spdlog::info("plotdata: {} calls outside the grid left out of the spatial heatmap", outside);

  bool any = false;
  for (const char* label : {"stochastic", "robust", "hybrid"}) {
    std::string file = std::string(label) + ".json";
    if (!run.has(file)) continue;
    any = true;
    auto x = read_json(run.need(file, "optimize")).at("x").get<std::vector<int>>();
    if (x.size() != grid.num_stations()) throw DataError(file + " does not match the grid's stations; rerun optimize");
    csv = "lat,lon,count\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& p = grid.cell_centers[grid.station_cells[i]];
      csv += format_double(p.lat) + "," + format_double(p.lon) + "," + std::to_string(x[i]) + "\n";
    }
    run.write(std::string("stationing_") + label + ".csv", csv);
  }
  if (!any) throw DependencyError("stochastic.json or robust.json", "optimize");

  csv = "grid_s,calibrated_s,reported_s\n";
  if (run.has("verification_points.csv")) {
    auto lines = read_lines(run.need("verification_points.csv", "verify").string());
    csv.clear();
    for (const auto& l : lines) csv += l + "\n";
  } else {
    spdlog::warn("plotdata: no verification points; run `emsdeploy verify` to fill plot_verification.csv");
  }
  run.write("plot_verification.csv", csv);

  csv = "tract_id,avg_station_time_min,mean_reported_min,fitted_min\n";
  if (run.has("tracts.csv")) {
    auto lines = read_lines(run.need("tracts.csv", "analyze").string());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 1; i < lines.size(); ++i)
      if (!trim(lines[i]).empty()) rows.push_back(split_csv_line(lines[i]));
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 1);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double yv = 0.0, xv = 0.0;
      if (rows[i].size() < 4 || !parse_double(rows[i][1], yv) || !parse_double(rows[i][3], xv))
        throw ParseError("tracts.csv line " + std::to_string(i + 2) + " is malformed");
      X(static_cast<Eigen::Index>(i), 0) = xv;
      y(static_cast<Eigen::Index>(i)) = yv;
    }
    std::optional<LinearModel> line;
    if (rows.size() >= 2) line = fit_ols(X, y);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = static_cast<Eigen::Index>(i);
      double fitted = line ? line->intercept + line->coef(0) * X(r, 0) : y(r);
      csv += csv_escape(rows[i][0]) + "," + format_double(X(r, 0)) + "," + format_double(y(r)) + "," + format_double(fitted) + "\n";
    }
  } else {
    spdlog::warn("plotdata: no tract data; run `emsdeploy analyze` to fill regression_scatter.csv");
  }
  run.write("regression_scatter.csv", csv);
}

// ---------------------------------------------------------------------------
// synth: a synthetic city with calls, SVI table, tract map and a config for it

inline void cmd_synth(Run& run) {
  const auto& c = run.cfg();
  SyntheticCityConfig sc;
  auto b = c.list("bounds");
  sc.bounds = {b[0], b[1], b[2], b[3]};
  sc.n_rows = c.count("rows");
  sc.n_cols = c.count("cols");
  sc.n_stations = c.count("n_stations");
  for (double s : c.list("stations")) sc.station_cells.push_back(static_cast<std::size_t>(s));
  for (double h : c.list("hospitals")) sc.hospital_cells.push_back(static_cast<std::size_t>(h));
  sc.speed_kmh = c.num("speed_kmh");
  sc.n_calls = c.count("synth_calls");
  sc.noise_sigma = c.num("synth_noise");
  auto city = generate_city(sc, c.seed());
  run.write("calls.csv", serialize_calls(city.calls));

  auto tract_map = synthetic_tract_map(city.grid);
  std::string csv = "cell_index,tract_id\n";
  std::vector<std::string> ids;
  for (const auto& [cell, id] : tract_map) {
    csv += std::to_string(cell) + "," + id + "\n";
    if (ids.empty() || ids.back() != id) ids.push_back(id);
  }
  run.write("tract_map.csv", csv);
  auto svi = synthetic_svi(ids, c.seed());
  csv = "tract_id";
  for (const auto* col : kSviColumns) csv += std::string(",") + col;
  csv += "\n";
  for (const auto& [id, row] : svi) {
    csv += id;
    for (double v : row) csv += "," + format_double(v);
    csv += "\n";
  }
  run.write("svi.csv", csv);

  // A config sized for the generated city; paths resolve next to it.
  json cfg = c.values();
  cfg["calls"] = "calls.csv";
  cfg["svi"] = "svi.csv";
  cfg["tract_map"] = "tract_map.csv";
  cfg["zone"] = "-06:00";
  // Widen coverage until every cell is reachable from some station, so the
  // robust model is not dominated by regions nobody can serve.
  double reach = 0.0;
  for (std::size_t j = 0; j < city.grid.num_cells(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < city.grid.num_stations(); ++i) best = std::min(best, city.grid.station_time(i, j));
    reach = std::max(reach, best);
  }
  cfg["coverage_threshold_s"] = std::max(c.num("coverage_threshold_s"), std::ceil(reach / 60.0) * 60.0);
  std::size_t test_calls = city.calls.size() - static_cast<std::size_t>(std::floor(c.num("train_fraction") * static_cast<double>(city.calls.size()) + 1e-9));
  cfg["n_batches"] = 4;
  cfg["n_calls"] = std::max<std::size_t>(1, test_calls / 4);
  cfg["verify_batch_size"] = std::max<std::size_t>(1, test_calls / 10);
  cfg["verify_batches"] = 10;
  cfg["analysis_folds"] = 3;
  run.write_json("config.json", cfg);
  spdlog::info("synth: {} calls on a {}x{} grid", city.calls.size(), sc.n_rows, sc.n_cols);
}

struct Command {
  const char* name;
  const char* help;
  std::function<void(Run&)> fn;
};

inline const std::vector<Command>& commands() {
  static const std::vector<Command> all = {
      {"grid", "build the grid, travel matrix, adjacency and coverage", cmd_grid},
      {"preprocess", "parse calls, filter peak hours, split, build the demand matrix", cmd_preprocess},
      {"fit", "fit Poisson rates, the uncertainty set and the travel-time calibration", cmd_fit},
      {"optimize", "solve the stochastic, robust and hybrid stationing models", cmd_optimize},
      {"simulate", "simulate stationings on the test calls in batches", cmd_simulate},
      {"verify", "compare calibrated and reported travel times on the test calls", cmd_verify},
      {"alpha-cv", "cross-validate the uncertainty level alpha", cmd_alpha_cv},
      {"fleet-sweep", "solve and simulate over a range of fleet sizes", cmd_fleet_sweep},
      {"analyze", "compare regression models of travel time on SVI tracts", cmd_analyze},
      {"plotdata", "emit plot-ready CSV files from earlier outputs", cmd_plotdata},
      {"synth", "generate a synthetic city and a config for it", cmd_synth},
  };
  return all;
}

}  // namespace emsdeploy::cli
