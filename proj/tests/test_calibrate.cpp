#include <gtest/gtest.h>

#include <random>

#include "emsdeploy/calibrate.hpp"
#include "emsdeploy/synthetic.hpp"

using namespace emsdeploy;

namespace {

std::vector<TimePair> model_pairs(double a, double b, std::size_t n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> g(30.0, 1500.0);
  std::normal_distribution<double> eps(0.0, noise);
  std::vector<TimePair> out;
  for (std::size_t k = 0; k < n; ++k) {
    double grid = g(rng);
    out.push_back({grid, std::exp(a + b * std::log(grid) + (noise > 0 ? eps(rng) : 0.0))});
  }
  return out;
}

// Calls in a grid where each reported travel is the given function of the
// grid time between ambulance and call cells.
template <class F>
std::vector<CallRecord> calls_with_reports(const Grid& g, std::size_t n, std::uint64_t seed, F reported) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cell(0, g.num_cells() - 1);
  std::vector<CallRecord> out;
  for (std::size_t k = 0; k < n; ++k) {
    auto from = cell(rng), to = cell(rng);
    CallRecord c;
    c.timestamp = 1.6e9 + static_cast<double>(k) * 600.0;
    c.lat = g.cell_centers[to].lat;
    c.lon = g.cell_centers[to].lon;
    c.ambulance_lat = g.cell_centers[from].lat;
    c.ambulance_lon = g.cell_centers[from].lon;
    c.reported_travel_s = reported(g.travel_time_s(from, to), rng);
    out.push_back(c);
  }
  return out;
}

Grid test_grid() {
  return build_grid(Bounds{30.10, 30.55, -97.95, -97.55}, 6, 6, SyntheticSpeedProvider{40.0}, {0, 20});
}

}  // namespace

TEST(FitLoglog, NoiselessRecovery) {
  auto m = fit_loglog(model_pairs(0.5, 0.9, 200, 0.0, 1), 0.0);
  EXPECT_NEAR(m.a, 0.5, 1e-9);
  EXPECT_NEAR(m.b, 0.9, 1e-9);
  EXPECT_NEAR(m.r_squared, 1.0, 1e-9);
  EXPECT_EQ(m.n_used, 200u);
  EXPECT_EQ(m.kind, CalibrationKind::loglog);
}

TEST(FitLoglog, PureNoise) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> g(30.0, 1500.0);
  std::lognormal_distribution<double> r(5.5, 0.5);
  std::vector<TimePair> pairs;
  for (int k = 0; k < 1000; ++k) pairs.push_back({g(rng), r(rng)});
  auto m = fit_loglog(pairs, 0.01);
  EXPECT_LT(std::abs(m.b), 0.1);
  EXPECT_LT(m.r_squared, 0.02);
}

TEST(FitLoglog, RecoveryWithinStandardErrorBands) {
  const double a = 0.8, b = 0.8, sigma = 0.25;
  int covered_a = 0, covered_b = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto pairs = model_pairs(a, b, 300, sigma, 1000 + seed);
    auto m = fit_loglog(pairs, 0.0);
    // Textbook OLS standard errors from the residual variance.
    std::vector<double> u;
    double ssr = 0.0;
    for (const auto& p : pairs) {
      u.push_back(std::log(p.grid_s));
      double e = std::log(p.reported_s) - (m.a + m.b * u.back());
      ssr += e * e;
    }
    double n = static_cast<double>(u.size());
    double mu = mean_of(u), suu = 0.0;
    for (double x : u) suu += (x - mu) * (x - mu);
    double s2 = ssr / (n - 2);
    double se_b = std::sqrt(s2 / suu);
    double se_a = std::sqrt(s2 * (1.0 / n + mu * mu / suu));
    covered_a += std::abs(m.a - a) <= 1.96 * se_a;
    covered_b += std::abs(m.b - b) <= 1.96 * se_b;
  }
  // 95% nominal coverage; 200 seeds leave about 3 points of binomial spread.
  EXPECT_GE(covered_a, 180);
  EXPECT_GE(covered_b, 180);
}

TEST(FitLoglog, RefitOnPredictionsIsIdempotent) {
  auto m = fit_loglog(model_pairs(0.7, 0.85, 500, 0.3, 3), 0.01);
  std::vector<TimePair> pred;
  for (const auto& p : model_pairs(0, 1, 300, 0.0, 4)) pred.push_back({p.grid_s, m.apply(p.grid_s)});
  auto again = fit_loglog(pred, 0.0);
  EXPECT_NEAR(again.a, m.a, 1e-9);
  EXPECT_NEAR(again.b, m.b, 1e-9);
  EXPECT_NEAR(again.r_squared, 1.0, 1e-12);
}

TEST(FitLoglog, TrimmedCountInDiagnostics) {
  auto pairs = model_pairs(0.5, 0.9, 400, 0.2, 5);
  auto m = fit_loglog(pairs, 0.05);
  EXPECT_EQ(m.n_used, trim_quantiles(pairs, 0.05).size());
  EXPECT_EQ(m.trim_p, 0.05);
}

TEST(FitLoglog, Errors) {
  std::vector<TimePair> same{{100, 50}, {100, 60}, {100, 70}, {100, 80}};
  EXPECT_THROW(fit_loglog(same, 0.0), DataError);
  std::vector<TimePair> few{{100, 50}, {200, 60}};
  EXPECT_THROW(fit_loglog(few, 0.0), DataError);
}

TEST(ApplyModel, IdentityNeutralAndMonotone) {
  auto id = identity_calibration();
  for (double t : {0.0, 1.0, 300.0, 12345.6}) EXPECT_EQ(id.apply(t), t);
  CalibrationModel neutral{CalibrationKind::loglog, 0.0, 1.0};
  for (double t : {0.5, 1.0, 300.0, 12345.6}) EXPECT_NEAR(neutral.apply(t), t, 1e-9 * t);
  EXPECT_EQ(neutral.apply(0.0), 0.0);
  auto fitted = fit_loglog(model_pairs(0.8, 0.8, 300, 0.25, 6), 0.01);
  ASSERT_GT(fitted.b, 0.0);
  EXPECT_LT(fitted.apply(100.0), fitted.apply(200.0));
  EXPECT_GT(fitted.apply(1e-3), 0.0);
}

TEST(FitLinear, RecoversLine) {
  std::vector<TimePair> pairs;
  for (int k = 1; k <= 50; ++k) pairs.push_back({10.0 * k, 20.0 + 0.7 * 10.0 * k});
  auto m = fit_linear(pairs, 0.0);
  EXPECT_NEAR(m.a, 20.0, 1e-9);
  EXPECT_NEAR(m.b, 0.7, 1e-12);
  EXPECT_EQ(CalibrationModel({CalibrationKind::linear, -100.0, 1.0}).apply(50.0), 0.0);
}

TEST(CalibrationJson, RoundTrip) {
  auto m = fit_loglog(model_pairs(0.5, 0.9, 50, 0.1, 7), 0.02);
  auto back = calibration_from_json(calibration_to_json(m));
  EXPECT_EQ(back.kind, m.kind);
  EXPECT_EQ(back.a, m.a);
  EXPECT_EQ(back.b, m.b);
  EXPECT_EQ(back.n_used, m.n_used);
  EXPECT_THROW(calibration_kind_from_string("cubic"), ConfigError);
}

TEST(Verify, IdentityOnExactReports) {
  auto g = test_grid();
  auto calls = calls_with_reports(g, 400, 1, [](double t, auto&) { return t; });
  auto rep = verify(calls, g, identity_calibration(), 100, 4);
  ASSERT_EQ(rep.n_batches, 4u);
  for (double e : rep.batch_errors_s) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(rep.mean_error_s, 0.0);
}

TEST(Verify, FittedModelIsUnbiased) {
  auto g = test_grid();
  auto truth = [](double t, std::mt19937_64& rng) {
    return std::exp(0.8 + 0.8 * std::log(std::max(t, 30.0))) + std::normal_distribution<double>(0.0, 8.0)(rng);
  };
  auto train = calls_with_reports(g, 3000, 2, truth);
  auto test = calls_with_reports(g, 2000, 3, truth);
  std::vector<TimePair> pairs;
  for (const auto& p : calibration_pairs(train, g))
    if (p.grid_s > 0) pairs.push_back(p);
  auto m = fit_loglog(pairs, 0.0);
  // Same-cell calls have grid time 0 but a positive report; leave them out.
  std::vector<CallRecord> usable;
  for (const auto& c : test)
    if (assign_cell(g, c.lat, c.lon) != assign_cell(g, *c.ambulance_lat, *c.ambulance_lon)) usable.push_back(c);
  auto rep = verify(usable, g, m, 90, 20);
  ASSERT_EQ(rep.n_batches, 20u);
  double se = rep.std_error_s / std::sqrt(20.0);
  EXPECT_LE(std::abs(rep.mean_error_s), 3.0 * se + 0.5);
}

TEST(Verify, InjectedBias) {
  auto g = test_grid();
  auto calls = calls_with_reports(g, 2000, 4, [](double t, std::mt19937_64& rng) {
    return t - 60.0 + std::normal_distribution<double>(0.0, 20.0)(rng);
  });
  auto rep = verify(calls, g, identity_calibration(), 100, 20);
  double se = rep.std_error_s / std::sqrt(20.0);
  EXPECT_NEAR(rep.mean_error_s, 60.0, 3.0 * se);
  double grand = 0;
  auto pairs = calibration_pairs(calls, g);
  for (const auto& p : pairs) grand += p.grid_s - p.reported_s;
  EXPECT_NEAR(rep.mean_error_s, grand / static_cast<double>(pairs.size()), 1e-9);
}

TEST(Verify, MissingFieldsExcluded) {
  auto g = test_grid();
  auto calls = calls_with_reports(g, 250, 5, [](double t, auto&) { return t; });
  calls[3].reported_travel_s.reset();
  calls[8].ambulance_lat.reset();
  auto rep = verify(calls, g, identity_calibration(), 100, 5);
  EXPECT_EQ(rep.excluded, 2u);
  EXPECT_EQ(rep.n_batches, 2u);
  EXPECT_THROW(verify(std::vector<CallRecord>{}, g, identity_calibration(), 100, 5), DataError);
}

TEST(SyntheticCity, CalibrationRecoversTruth) {
  SyntheticCityConfig cfg;
  cfg.n_calls = 3000;
  auto city = generate_city(cfg, 12);
  std::vector<TimePair> pairs;
  for (const auto& p : calibration_pairs(city.calls, city.grid)) pairs.push_back({std::max(p.grid_s, 30.0), p.reported_s});
  auto m = fit_loglog(pairs, 0.0);
  EXPECT_NEAR(m.b, cfg.true_b, 0.05);
  EXPECT_NEAR(m.a, cfg.true_a, 0.35);
}
