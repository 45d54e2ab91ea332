#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "emsdeploy/demand.hpp"
#include "emsdeploy/dispatchflow.hpp"
#include "emsdeploy/stochastic.hpp"
#include "json.hpp"

namespace emsdeploy {

struct WorstCase {
  std::vector<int> d;
  long shortfall = 0;
  bool exact = true;  // false when found by greedy ascent
};

/// Greedy ascent inside the set: repeatedly raise the region whose increment
/// adds the most shortfall (ties: lowest index) until no increment is
/// admissible.
inline WorstCase greedy_worst_case(std::span<const int> x, const UncertaintySet& set, ShortfallEvaluator& eval,
                                   int wildcard = 0) {
  WorstCase wc;
  wc.exact = false;
  wc.d.assign(set.regions(), 0);
  wc.shortfall = eval(x, wc.d, wildcard);
  for (;;) {
    std::size_t pick = set.regions();
    long pick_value = -1;
    for (std::size_t j = 0; j < set.regions(); ++j) {
      ++wc.d[j];
      if (set.contains(wc.d)) {
        long v = eval(x, wc.d, wildcard);
        if (v > pick_value) {
          pick = j;
          pick_value = v;
        }
      }
      --wc.d[j];
    }
    if (pick == set.regions()) break;
    ++wc.d[pick];
    wc.shortfall = pick_value;
  }
  return wc;
}

/// Lazily enumerated members of an uncertainty set, shared across calls.
class DemandCandidates {
 public:
  DemandCandidates(const UncertaintySet& set, double budget) : set_(set) {
    try {
      members_ = enumerate_set(set, budget);
      exact_ = true;
    } catch (const ExplicitlyTooLarge&) {
      exact_ = false;
    }
  }
  bool exact() const noexcept { return exact_; }
  const std::vector<std::vector<int>>& members() const noexcept { return members_; }
  const UncertaintySet& set() const noexcept { return set_; }

 private:
  const UncertaintySet& set_;
  std::vector<std::vector<int>> members_;
  bool exact_ = false;
};

inline WorstCase worst_case_demand(std::span<const int> x, const DemandCandidates& candidates,
                                   ShortfallEvaluator& eval, int wildcard = 0) {
  if (!candidates.exact()) return greedy_worst_case(x, candidates.set(), eval, wildcard);
  WorstCase wc;
  wc.shortfall = -1;
  for (const auto& d : candidates.members()) {
    long v = eval(x, d, wildcard);
    if (v > wc.shortfall) {  // strict: first maximiser in lexicographic order
      wc.shortfall = v;
      wc.d = d;
    }
  }
  return wc;
}

/// Demand in D(alpha) maximizing the minimum shortfall of stationing x.
inline WorstCase worst_case_demand(std::span<const int> x, const UncertaintySet& set, const EdgeSet& e,
                                   double enumeration_budget = 1e6) {
  DemandCandidates candidates(set, enumeration_budget);
  ShortfallEvaluator eval(e);
  return worst_case_demand(x, candidates, eval);
}

struct CcgIteration {
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  std::vector<int> x;
  std::vector<int> worst_d;
};

struct CcgState {
  std::vector<std::vector<int>> scenario_pool;
  double lower_bound = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::vector<CcgIteration> history;
};

struct CcgConfig {
  double epsilon = 1e-6;
  std::size_t max_iter = 100;
  double enumeration_budget = 1e6;
  SearchConfig search;
};

struct RobustSolution {
  Deployment x_star;
  long worst_case_shortfall = 0;
  std::vector<int> certifying_demand;
  bool converged = false;
  bool exact_subproblem = true;
  bool master_exact = true;
  CcgState state;
};

/// Column-and-constraint generation: the master minimizes the pool maximum
/// over stationings, the subproblem adds the worst demand for the master's
/// stationing, starting from the zero-demand pool.
inline RobustSolution solve_robust_ccg(const UncertaintySet& set, int n, const EdgeSet& e,
                                       const CcgConfig& config = {}, const SolverBackend* backend = nullptr) {
  if (!(config.epsilon > 0.0)) throw ConfigError("CCG epsilon must be positive");
  if (set.regions() != e.n_regions) throw DataError("uncertainty set does not match the region count");
  BranchAndBound default_backend;
  const SolverBackend& solver = backend ? *backend : default_backend;
  DemandCandidates candidates(set, config.enumeration_budget);
  ShortfallEvaluator sub_eval(e);

  RobustSolution sol;
  sol.exact_subproblem = candidates.exact();
  auto& st = sol.state;
  st.scenario_pool.push_back(std::vector<int>(set.regions(), 0));

  auto pool_eval = std::make_shared<ShortfallEvaluator>(e);
  const auto& pool = st.scenario_pool;
  DeploymentObjective pool_max = [pool_eval, &pool](std::span<const int> x, int wildcard) {
    long worst = 0;
    for (const auto& d : pool) worst = std::max(worst, (*pool_eval)(x, d, wildcard));
    return static_cast<double>(worst);
  };

  while (st.iterations < config.max_iter) {
    ++st.iterations;
    auto master = solver.solve({e.n_stations, n, pool_max}, config.search);
    sol.master_exact = sol.master_exact && master.flag.exact;
    // The master optimum over a growing pool never decreases; keep the bound
    // monotone even if a truncated search reports less.
    st.lower_bound = std::max(st.lower_bound, master.objective);
    auto wc = worst_case_demand(master.x, candidates, sub_eval);
    if (static_cast<double>(wc.shortfall) < st.upper_bound) {
      st.upper_bound = static_cast<double>(wc.shortfall);
      sol.x_star = {master.x, n};
      sol.worst_case_shortfall = wc.shortfall;
      sol.certifying_demand = wc.d;
    }
    st.history.push_back({st.lower_bound, st.upper_bound, master.x, wc.d});
    if (st.upper_bound - st.lower_bound <= config.epsilon) {
      sol.converged = true;
      break;
    }
    st.scenario_pool.push_back(wc.d);
  }
  return sol;
}

struct HybridSolution {
  Deployment x_star;
  double objective = 0.0;
  long worst_case = 0;
  double mean_shortfall = 0.0;
  OptimalityFlag optimality;
};

/// Minimizes lambda * worst case over D + (1 - lambda) * scenario mean.
inline HybridSolution solve_robust_saa_hybrid(const UncertaintySet& set, const ScenarioSet& scenarios, int n,
                                              const EdgeSet& e, double lambda, const CcgConfig& config = {}) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (scenarios.size() == 0) throw DataError("no scenarios for the hybrid objective");
  auto candidates = std::make_shared<DemandCandidates>(set, config.enumeration_budget);
  auto wc_eval = std::make_shared<ShortfallEvaluator>(e);
  auto mean = mean_shortfall_objective(scenarios, e);
  DeploymentObjective blended = [=](std::span<const int> x, int wildcard) {
    double value = 0.0;
    if (lambda > 0.0) value += lambda * static_cast<double>(worst_case_demand(x, *candidates, *wc_eval, wildcard).shortfall);
    if (lambda < 1.0) value += (1.0 - lambda) * mean(x, wildcard);
    return value;
  };
  auto result = BranchAndBound{}.solve({e.n_stations, n, blended}, config.search);
  HybridSolution sol;
  sol.x_star = {result.x, n};
  sol.objective = result.objective;
  sol.optimality = result.flag;
  sol.worst_case = worst_case_demand(result.x, *candidates, *wc_eval).shortfall;
  sol.mean_shortfall = evaluate_deployment(result.x, scenarios, e);
  return sol;
}

inline nlohmann::json robust_solution_to_json(const RobustSolution& s, double alpha) {
  return {{"x", s.x_star.x},
          {"worst_case", s.worst_case_shortfall},
          {"certifying_demand", s.certifying_demand},
          {"alpha", alpha},
          {"iterations", s.state.iterations},
          {"converged", s.converged},
          {"exact_subproblem", s.exact_subproblem}};
}

inline std::string ccg_history_csv(const CcgState& st) {
  std::string out = "iter,LB,UB\n";
  for (std::size_t k = 0; k < st.history.size(); ++k)
    out += std::to_string(k + 1) + "," + format_double(st.history[k].lower_bound) + "," +
           format_double(st.history[k].upper_bound) + "\n";
  return out;
}

}  // namespace emsdeploy
