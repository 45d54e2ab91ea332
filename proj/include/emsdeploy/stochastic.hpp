#pragma once

#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "emsdeploy/common.hpp"
#include "emsdeploy/dispatchflow.hpp"
#include "emsdeploy/ingest.hpp"
#include "json.hpp"

namespace emsdeploy {

/// Equally weighted demand scenarios over the regions.
struct ScenarioSet {
  std::vector<std::vector<int>> scenarios;

  std::size_t size() const noexcept { return scenarios.size(); }
};

/// Resamples M historical period rows uniformly with replacement.
inline ScenarioSet sample_scenarios(const DemandMatrix& demand, std::size_t M, std::uint64_t seed) {
  if (M < 1) throw ConfigError("scenario count must be at least 1");
  if (demand.periods() == 0) throw DataError("cannot sample scenarios from an empty demand matrix");
  auto rng = make_rng(seed, "scenarios");
  std::uniform_int_distribution<std::size_t> pick(0, demand.periods() - 1);
  ScenarioSet s;
  s.scenarios.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    auto row = demand.counts.row(pick(rng));
    s.scenarios.emplace_back(row.begin(), row.end());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Deployment search

/// objective(x, wildcard): exact value when wildcard == 0, otherwise a lower
/// bound valid for every completion that adds at most `wildcard` ambulances.
using DeploymentObjective = std::function<double(std::span<const int>, int)>;

struct DeploymentProblem {
  std::size_t n_stations = 0;
  int fleet = 0;
  DeploymentObjective objective;
};

struct SearchConfig {
  std::size_t max_nodes = 2'000'000;
  double tie_tolerance = 1e-9;
};

struct OptimalityFlag {
  bool exact = true;
  double gap = 0.0;  // incumbent minus best open bound when not exact

  std::string describe() const { return exact ? "exact" : "bound_gap(" + format_double(gap) + ")"; }
};

struct SearchResult {
  std::vector<int> x;
  double objective = 0.0;
  OptimalityFlag flag;
  std::size_t nodes = 0;
};

/// Seam for plugging in an external MILP backend.
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual SearchResult solve(const DeploymentProblem& problem, const SearchConfig& config) const = 0;
};

/// Best-bound branch and bound over stationings of exactly `fleet`
/// ambulances. Objectives are nonincreasing in x, so this loses nothing
/// against "at most fleet" and never leaves ambulances unplaced on ties.
/// Stations are fixed in index order; the unplaced remainder is handed to
/// the objective as a wildcard. Among optimal stationings the
/// lexicographically smallest is returned.
class BranchAndBound final : public SolverBackend {
 public:
  SearchResult solve(const DeploymentProblem& problem, const SearchConfig& config) const override {
    const std::size_t I = problem.n_stations;
    const int n = problem.fleet;
    const double eps = config.tie_tolerance;
    if (n < 0) throw ConfigError("fleet size must be nonnegative");

    SearchResult best;
    best.objective = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<int>& x, double value) {
      if (value < best.objective - eps || (value <= best.objective + eps && x < best.x)) {
        best.x = x;
        best.objective = value;
      }
    };
    if (I == 0) {
      best.objective = problem.objective(std::vector<int>{}, 0);
      return best;
    }
    greedy_incumbent(problem, consider);

    struct Node {
      double bound;
      std::vector<int> prefix;  // counts for stations [0, prefix.size())
      int remaining;
      std::uint64_t seq;
    };
    auto worse = [](const Node& a, const Node& b) {
      if (a.bound != b.bound) return a.bound > b.bound;
      if (a.prefix != b.prefix) return a.prefix > b.prefix;
      return a.seq > b.seq;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
    std::uint64_t seq = 0;
    std::vector<int> full(I, 0);

    // A node cannot beat the incumbent when its bound is higher, or when it
    // ties and every completion is lexicographically larger.
    auto prunable = [&](double bound, const std::vector<int>& prefix) {
      if (bound > best.objective + eps) return true;
      if (bound < best.objective - eps || best.x.empty()) return false;
      return std::lexicographical_compare(best.x.begin(), best.x.begin() + static_cast<long>(prefix.size()),
                                          prefix.begin(), prefix.end());
    };
    auto evaluate = [&](const std::vector<int>& prefix, int remaining) {
      std::fill(full.begin(), full.end(), 0);
      std::copy(prefix.begin(), prefix.end(), full.begin());
      ++best.nodes;
      return problem.objective(full, remaining);
    };
    auto push_or_finish = [&](std::vector<int> prefix, int remaining) {
      if (prefix.size() + 1 == I) prefix.push_back(remaining);  // last station takes the rest
      if (prefix.size() == I || remaining == 0) {
        prefix.resize(I, 0);
        consider(prefix, evaluate(prefix, 0));
        return;
      }
      double bound = evaluate(prefix, remaining);
      if (!prunable(bound, prefix)) open.push({bound, std::move(prefix), remaining, seq++});
    };

    push_or_finish({}, n);
    while (!open.empty()) {
      if (best.nodes >= config.max_nodes) {
        double lowest = open.top().bound;
        best.flag = {false, std::max(0.0, best.objective - lowest)};
        return best;
      }
      Node node = open.top();
      open.pop();
      if (prunable(node.bound, node.prefix)) continue;
      for (int v = 0; v <= node.remaining; ++v) {
        auto child = node.prefix;
        child.push_back(v);
        push_or_finish(std::move(child), node.remaining - v);
      }
    }
    return best;
  }

 private:
  template <class Consider>
  static void greedy_incumbent(const DeploymentProblem& problem, Consider&& consider) {
    std::vector<int> x(problem.n_stations, 0);
    double value = problem.objective(x, 0);
    for (int placed = 0; placed < problem.fleet; ++placed) {
      std::size_t pick = 0;
      double pick_value = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < problem.n_stations; ++i) {
        ++x[i];
        double v = problem.objective(x, 0);
        --x[i];
        if (v < pick_value - 1e-12) {
          pick = i;
          pick_value = v;
        }
      }
      ++x[pick];
      value = pick_value;
    }
    consider(x, value);
  }
};

// ---------------------------------------------------------------------------

struct StochasticSolution {
  Deployment x_star;
  double objective = 0.0;
  std::vector<ShortfallResult> per_scenario;
  OptimalityFlag optimality;
  std::size_t nodes = 0;
};

inline double evaluate_deployment(std::span<const int> x, const ScenarioSet& scenarios, const EdgeSet& e) {
  if (scenarios.size() == 0) throw DataError("no scenarios to evaluate");
  ShortfallEvaluator eval(e);
  long sum = 0;
  for (const auto& d : scenarios.scenarios) sum += eval(x, d);
  return static_cast<double>(sum) / static_cast<double>(scenarios.size());
}

/// Mean-shortfall objective with the wildcard relaxation as its bound.
inline DeploymentObjective mean_shortfall_objective(const ScenarioSet& scenarios, const EdgeSet& e) {
  auto eval = std::make_shared<ShortfallEvaluator>(e);
  return [eval, &scenarios](std::span<const int> x, int wildcard) {
    long sum = 0;
    for (const auto& d : scenarios.scenarios) sum += (*eval)(x, d, wildcard);
    return static_cast<double>(sum) / static_cast<double>(scenarios.size());
  };
}

inline StochasticSolution solve_stochastic(const ScenarioSet& scenarios, int n, const EdgeSet& e,
                                           const SearchConfig& config = {}, const SolverBackend* backend = nullptr) {
  if (scenarios.size() == 0) throw DataError("no scenarios to optimize over");
  for (const auto& d : scenarios.scenarios)
    if (d.size() != e.n_regions) throw DataError("scenario width does not match the region count");
  BranchAndBound default_backend;
  const SolverBackend& solver = backend ? *backend : default_backend;
  auto result = solver.solve({e.n_stations, n, mean_shortfall_objective(scenarios, e)}, config);
  StochasticSolution sol;
  sol.x_star = {result.x, n};
  sol.optimality = result.flag;
  sol.nodes = result.nodes;
  long sum = 0;
  for (const auto& d : scenarios.scenarios) {
    sol.per_scenario.push_back(min_shortfall(result.x, d, e));
    sum += sol.per_scenario.back().total;
  }
  sol.objective = static_cast<double>(sum) / static_cast<double>(scenarios.size());
  return sol;
}

inline nlohmann::json stochastic_solution_to_json(const StochasticSolution& s, std::size_t M, std::uint64_t seed) {
  return {{"x", s.x_star.x},
          {"objective", s.objective},
          {"n", s.x_star.fleet_bound},
          {"M", M},
          {"seed", seed},
          {"optimality_flag", s.optimality.describe()}};
}

}  // namespace emsdeploy
