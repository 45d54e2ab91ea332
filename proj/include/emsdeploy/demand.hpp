#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "emsdeploy/common.hpp"
#include "emsdeploy/ingest.hpp"
#include "json.hpp"

namespace emsdeploy {

/// Expected calls per period at four aggregation levels.
struct PoissonRates {
  std::vector<double> single;
  std::vector<double> local;     // summed over the adjacency neighbourhood
  std::vector<double> regional;  // summed over the coverage ball
  double global = 0.0;
};

/// Row j of `neighbourhood` marks the cells aggregated for region j.
inline std::vector<double> neighbourhood_means(const DemandMatrix& demand, const BoolMatrix& neighbourhood) {
  std::size_t J = demand.regions();
  std::vector<double> out(J, 0.0);
  for (std::size_t p = 0; p < demand.periods(); ++p)
    for (std::size_t j = 0; j < J; ++j) {
      long s = 0;
      for (std::size_t k = 0; k < J; ++k)
        if (neighbourhood(j, k)) s += demand.counts(p, k);
      out[j] += static_cast<double>(s);
    }
  for (auto& v : out) v /= static_cast<double>(demand.periods());
  return out;
}

inline PoissonRates fit_rates(const DemandMatrix& demand, const BoolMatrix& adjacency, const BoolMatrix& ball) {
  if (demand.periods() == 0) throw DataError("cannot fit demand rates from zero periods");
  std::size_t J = demand.regions();
  if (adjacency.rows() != J || ball.rows() != J) throw DataError("neighbourhood matrices do not match regions");
  PoissonRates r;
  r.single.assign(J, 0.0);
  double total = 0.0;
  for (std::size_t p = 0; p < demand.periods(); ++p)
    for (std::size_t j = 0; j < J; ++j) {
      r.single[j] += demand.counts(p, j);
      total += demand.counts(p, j);
    }
  auto P = static_cast<double>(demand.periods());
  for (auto& v : r.single) v /= P;
  r.local = neighbourhood_means(demand, adjacency);
  r.regional = neighbourhood_means(demand, ball);
  r.global = total / P;
  return r;
}

/// Smallest k with P(Poisson(rate) <= k) >= 1 - alpha, by direct pmf
/// summation (log-space terms for large rates).
inline std::int64_t poisson_var(double rate, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(rate >= 0.0) || !std::isfinite(rate)) throw ConfigError("Poisson rate must be finite and nonnegative");
  if (rate == 0.0) return 0;
  const double target = 1.0 - alpha;
  double cdf = 0.0;
  double comp = 0.0;  // Kahan compensation
  auto add = [&](double term) {
    double y = term - comp;
    double t = cdf + y;
    comp = (t - cdf) - y;
    cdf = t;
  };
  if (rate < 600.0) {
    double pmf = std::exp(-rate);
    for (std::int64_t k = 0;; ++k) {
      add(pmf);
      if (cdf >= target) return k;
      pmf *= rate / static_cast<double>(k + 1);
      if (pmf == 0.0 && static_cast<double>(k) > rate) return k;
    }
  }
  const double log_rate = std::log(rate);
  for (std::int64_t k = 0;; ++k) {
    double kk = static_cast<double>(k);
    add(std::exp(-rate + kk * log_rate - std::lgamma(kk + 1.0)));
    if (cdf >= target) return k;
    if (kk > rate + 60.0 * std::sqrt(rate) + 100.0) return k;
  }
}

/// Integer demand vectors admitted by Value-at-Risk caps at four levels.
struct UncertaintySet {
  double alpha = 0.01;
  std::vector<std::int64_t> single_cap;
  std::vector<std::int64_t> local_cap;
  std::vector<std::int64_t> regional_cap;
  std::int64_t global_cap = 0;
  BoolMatrix adjacency;
  BoolMatrix ball;

  std::size_t regions() const noexcept { return single_cap.size(); }

  bool contains(std::span<const int> d) const {
    if (d.size() != regions()) return false;
    std::int64_t total = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d[j] < 0 || d[j] > single_cap[j]) return false;
      total += d[j];
    }
    if (total > global_cap) return false;
    for (std::size_t j = 0; j < d.size(); ++j) {
      std::int64_t loc = 0, reg = 0;
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (adjacency(j, k)) loc += d[k];
        if (ball(j, k)) reg += d[k];
      }
      if (loc > local_cap[j] || reg > regional_cap[j]) return false;
    }
    return true;
  }
};

inline UncertaintySet build_uncertainty_set(const PoissonRates& rates, double alpha, BoolMatrix adjacency,
                                            BoolMatrix ball) {
  UncertaintySet s;
  s.alpha = alpha;
  for (double r : rates.single) s.single_cap.push_back(poisson_var(r, alpha));
  for (double r : rates.local) s.local_cap.push_back(poisson_var(r, alpha));
  for (double r : rates.regional) s.regional_cap.push_back(poisson_var(r, alpha));
  s.global_cap = poisson_var(rates.global, alpha);
  s.adjacency = std::move(adjacency);
  s.ball = std::move(ball);
  return s;
}

class ExplicitlyTooLarge : public SolverError {
 public:
  using SolverError::SolverError;
};

/// All members of the set in lexicographic order. Throws when the bounding
/// box of single caps exceeds `size_budget` points.
inline std::vector<std::vector<int>> enumerate_set(const UncertaintySet& set, double size_budget = 1e6) {
  std::size_t J = set.regions();
  double box = 1.0;
  for (auto c : set.single_cap) box *= static_cast<double>(c + 1);
  if (box > size_budget)
    throw ExplicitlyTooLarge("uncertainty set box has " + format_double(box) + " points, budget " +
                             format_double(size_budget));
  std::vector<std::vector<int>> out;
  std::vector<int> d(J, 0);
  // Sums for the local/regional constraints, maintained incrementally.
  std::vector<std::int64_t> loc(J, 0), reg(J, 0);
  std::int64_t total = 0;
  auto bump = [&](std::size_t k, int delta) {
    for (std::size_t j = 0; j < J; ++j) {
      if (set.adjacency(j, k)) loc[j] += delta;
      if (set.ball(j, k)) reg[j] += delta;
    }
    total += delta;
  };
  auto feasible = [&]() {
    if (total > set.global_cap) return false;
    for (std::size_t j = 0; j < J; ++j)
      if (loc[j] > set.local_cap[j] || reg[j] > set.regional_cap[j]) return false;
    return true;
  };
  // Depth-first in lexicographic order; every constraint is a nonnegative sum
  // so a failing prefix (rest zero) prunes its whole subtree.
  auto recurse = [&](auto&& self, std::size_t pos) -> void {
    if (pos == J) {
      out.push_back(d);
      return;
    }
    for (int v = 0; v <= set.single_cap[pos]; ++v) {
      if (v > 0) bump(pos, 1);
      d[pos] = v;
      if (!feasible()) break;
      self(self, pos + 1);
    }
    bump(pos, -d[pos]);
    d[pos] = 0;
  };
  if (feasible()) recurse(recurse, 0);
  return out;
}

inline nlohmann::json uncertainty_set_to_json(const UncertaintySet& s) {
  return {{"alpha", s.alpha},
          {"single_cap", s.single_cap},
          {"local_cap", s.local_cap},
          {"regional_cap", s.regional_cap},
          {"global_cap", s.global_cap}};
}

inline UncertaintySet uncertainty_set_from_json(const nlohmann::json& j, BoolMatrix adjacency, BoolMatrix ball) {
  UncertaintySet s;
  s.alpha = j.at("alpha").get<double>();
  s.single_cap = j.at("single_cap").get<std::vector<std::int64_t>>();
  s.local_cap = j.at("local_cap").get<std::vector<std::int64_t>>();
  s.regional_cap = j.at("regional_cap").get<std::vector<std::int64_t>>();
  s.global_cap = j.at("global_cap").get<std::int64_t>();
  s.adjacency = std::move(adjacency);
  s.ball = std::move(ball);
  return s;
}

}  // namespace emsdeploy
