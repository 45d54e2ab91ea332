#include <gtest/gtest.h>

#include <random>
#include <set>

#include "emsdeploy/demand.hpp"
#include "oracles.hpp"

using namespace emsdeploy;

namespace {

DemandMatrix matrix_from(const std::vector<std::vector<int>>& rows) {
  DemandMatrix m;
  m.counts = Dense<int>(rows.size(), rows.empty() ? 0 : rows[0].size(), 0);
  for (std::size_t p = 0; p < rows.size(); ++p) {
    for (std::size_t j = 0; j < rows[p].size(); ++j) m.counts(p, j) = rows[p][j];
    m.period_start_times.push_back(3600.0 * static_cast<double>(p));
    m.period_offsets.push_back(0);
  }
  return m;
}

BoolMatrix identity(std::size_t n) {
  BoolMatrix b(n, n, 0);
  for (std::size_t j = 0; j < n; ++j) b(j, j) = 1;
  return b;
}

BoolMatrix all_ones(std::size_t n) { return BoolMatrix(n, n, 1); }

BoolMatrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
  BoolMatrix b = identity(n);
  std::bernoulli_distribution coin(0.4);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t c = a + 1; c < n; ++c) b(a, c) = b(c, a) = coin(rng);
  return b;
}

UncertaintySet manual_set(std::vector<std::int64_t> single, std::vector<std::int64_t> local,
                          std::vector<std::int64_t> regional, std::int64_t global, BoolMatrix adj, BoolMatrix ball) {
  UncertaintySet s;
  s.single_cap = std::move(single);
  s.local_cap = std::move(local);
  s.regional_cap = std::move(regional);
  s.global_cap = global;
  s.adjacency = std::move(adj);
  s.ball = std::move(ball);
  return s;
}

}  // namespace

TEST(FitRates, AllZero) {
  auto m = matrix_from({{0, 0}, {0, 0}});
  auto r = fit_rates(m, identity(2), all_ones(2));
  EXPECT_EQ(r.single, (std::vector<double>{0, 0}));
  EXPECT_EQ(r.regional, (std::vector<double>{0, 0}));
  EXPECT_EQ(r.global, 0.0);
}

TEST(FitRates, SingleRegionMean) {
  auto r = fit_rates(matrix_from({{1}, {2}, {3}}), identity(1), identity(1));
  EXPECT_DOUBLE_EQ(r.single[0], 2.0);
  EXPECT_DOUBLE_EQ(r.global, 2.0);
}

TEST(FitRates, ZeroPeriodsIsAnError) {
  DemandMatrix m;
  m.counts = Dense<int>(0, 3);
  EXPECT_THROW(fit_rates(m, identity(3), identity(3)), DataError);
}

TEST(FitRates, NeighbourhoodSumsMatchSecondPass) {
  std::mt19937_64 rng(21);
  std::poisson_distribution<int> pois(2.5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::vector<int>> rows(30, std::vector<int>(4));
    for (auto& row : rows)
      for (auto& v : row) v = pois(rng);
    auto adj = random_symmetric(4, rng);
    BoolMatrix ball = adj;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t c = 0; c < 4; ++c)
        if (std::bernoulli_distribution(0.3)(rng)) ball(a, c) = 1;
    auto r = fit_rates(matrix_from(rows), adj, ball);
    for (std::size_t j = 0; j < 4; ++j) {
      // Sum each period's neighbourhood separately, then average.
      std::vector<double> series;
      for (const auto& row : rows) {
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += adj(j, k) ? row[k] : 0;
        series.push_back(s);
      }
      EXPECT_NEAR(r.local[j], mean_of(series), 1e-12);
      EXPECT_GE(r.local[j], r.single[j]);
      EXPECT_GE(r.regional[j], r.local[j]);  // ball contains adjacency here
      EXPECT_GE(r.global, r.single[j]);
    }
  }
}

TEST(PoissonVar, ZeroRate) {
  for (double a : {0.5, 0.01, 1e-6}) EXPECT_EQ(poisson_var(0.0, a), 0);
}

TEST(PoissonVar, MatchesPmfOracleOnGrid) {
  for (double rate : {0.1, 1.0, 2.0, 5.0, 20.0})
    for (double a : {0.1, 0.05, 0.01, 0.001, 0.0001})
      EXPECT_EQ(poisson_var(rate, a), oracle::poisson_quantile(rate, a)) << rate << " " << a;
}

TEST(PoissonVar, LargeRatesMatchOracle) {
  for (double rate : {150.0, 599.0, 600.0, 1200.0, 5000.0})
    for (double a : {0.1, 0.01, 0.0001}) EXPECT_EQ(poisson_var(rate, a), oracle::poisson_quantile(rate, a)) << rate;
}

TEST(PoissonVar, MonotoneInAlpha) {
  EXPECT_GE(poisson_var(5.0, 0.0001), poisson_var(5.0, 0.1));
  std::int64_t prev = 0;
  for (double a : {0.5, 0.2, 0.1, 0.05, 0.01, 0.001, 1e-5}) {
    auto k = poisson_var(3.3, a);
    EXPECT_GE(k, prev);
    prev = k;
  }
}

TEST(PoissonVar, RejectsBadAlpha) {
  EXPECT_THROW(poisson_var(1.0, 0.0), ConfigError);
  EXPECT_THROW(poisson_var(1.0, 1.0), ConfigError);
  EXPECT_THROW(poisson_var(-1.0, 0.1), ConfigError);
}

TEST(UncertaintySetBuild, ZeroRatesGiveOnlyZero) {
  PoissonRates r{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, 0.0};
  auto s = build_uncertainty_set(r, 0.05, identity(3), identity(3));
  auto all = enumerate_set(s);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0], (std::vector<int>{0, 0, 0}));
}

TEST(UncertaintySetBuild, SingleRegionIsInterval) {
  PoissonRates r{{2.0}, {2.0}, {2.0}, 2.0};
  auto s = build_uncertainty_set(r, 0.01, identity(1), identity(1));
  auto cap = oracle::poisson_quantile(2.0, 0.01);
  EXPECT_EQ(s.single_cap[0], cap);
  auto all = enumerate_set(s);
  ASSERT_EQ(all.size(), static_cast<std::size_t>(cap + 1));
  for (int v = 0; v <= cap + 2; ++v) EXPECT_EQ(s.contains(std::vector<int>{v}), v <= cap);
}

TEST(UncertaintySetBuild, BudgetCapsBind) {
  auto s = manual_set({2, 2}, {2, 2}, {3, 3}, 3, identity(2), all_ones(2));
  EXPECT_FALSE(s.contains(std::vector<int>{2, 2}));
  EXPECT_TRUE(s.contains(std::vector<int>{2, 1}));
}

TEST(UncertaintySetBuild, CapsMonotoneInAlpha) {
  PoissonRates r{{0.4, 1.7, 3.0}, {2.1, 4.0, 5.5}, {4.0, 6.0, 7.0}, 5.1};
  auto loose = build_uncertainty_set(r, 0.2, identity(3), all_ones(3));
  auto tight = build_uncertainty_set(r, 0.001, identity(3), all_ones(3));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_GE(tight.single_cap[j], loose.single_cap[j]);
    EXPECT_GE(tight.local_cap[j], loose.local_cap[j]);
    EXPECT_GE(tight.regional_cap[j], loose.regional_cap[j]);
  }
  EXPECT_GE(tight.global_cap, loose.global_cap);
  for (const auto& d : enumerate_set(loose)) EXPECT_TRUE(tight.contains(d));
}

TEST(Enumerate, AllCapsZero) {
  auto s = manual_set({0, 0}, {0, 0}, {0, 0}, 0, identity(2), identity(2));
  auto all = enumerate_set(s);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0], (std::vector<int>{0, 0}));
}

TEST(Enumerate, HandExample) {
  auto s = manual_set({1, 1}, {1, 1}, {1, 1}, 1, identity(2), identity(2));
  auto all = enumerate_set(s);
  std::set<std::vector<int>> got(all.begin(), all.end());
  EXPECT_EQ(got, (std::set<std::vector<int>>{{0, 0}, {1, 0}, {0, 1}}));
  EXPECT_EQ(got.size(), all.size());
}

TEST(Enumerate, MatchesRejectionCountOverBox) {
  std::mt19937_64 rng(33);
  for (int rep = 0; rep < 30; ++rep) {
    std::size_t J = 3 + rep % 2;
    std::uniform_int_distribution<int> cap(0, 4);
    std::vector<std::int64_t> single(J), local(J), regional(J);
    for (std::size_t j = 0; j < J; ++j) {
      single[j] = cap(rng);
      local[j] = cap(rng) + 2;
      regional[j] = cap(rng) + 3;
    }
    auto adj = random_symmetric(J, rng);
    auto ball = random_symmetric(J, rng);
    auto s = manual_set(single, local, regional, std::uniform_int_distribution<int>(0, 10)(rng), adj, ball);
    auto all = enumerate_set(s);
    std::vector<std::vector<int>> expected;
    for (const auto& d : oracle::box(single))
      if (oracle::in_set(s, d)) expected.push_back(d);
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(all, expected);  // lexicographic order, no duplicates
  }
}

TEST(Enumerate, DownwardClosed) {
  std::mt19937_64 rng(2);
  auto s = manual_set({3, 2, 4}, {4, 4, 5}, {6, 6, 6}, 7, random_symmetric(3, rng), all_ones(3));
  for (const auto& d : enumerate_set(s))
    for (std::size_t j = 0; j < 3; ++j)
      if (d[j] > 0) {
        auto e = d;
        --e[j];
        EXPECT_TRUE(s.contains(e));
      }
}

TEST(Enumerate, BudgetExceeded) {
  auto s = manual_set(std::vector<std::int64_t>(8, 9), std::vector<std::int64_t>(8, 90),
                      std::vector<std::int64_t>(8, 90), 90, identity(8), identity(8));
  EXPECT_THROW(enumerate_set(s, 1e6), ExplicitlyTooLarge);
}

TEST(UncertaintySetJson, RoundTrip) {
  PoissonRates r{{0.4, 1.7}, {2.1, 2.1}, {2.1, 2.1}, 2.1};
  auto s = build_uncertainty_set(r, 0.05, all_ones(2), all_ones(2));
  auto back = uncertainty_set_from_json(uncertainty_set_to_json(s), all_ones(2), all_ones(2));
  EXPECT_EQ(back.single_cap, s.single_cap);
  EXPECT_EQ(back.local_cap, s.local_cap);
  EXPECT_EQ(back.regional_cap, s.regional_cap);
  EXPECT_EQ(back.global_cap, s.global_cap);
  EXPECT_EQ(back.alpha, s.alpha);
}
