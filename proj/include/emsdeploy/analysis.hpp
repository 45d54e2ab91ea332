#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "emsdeploy/common.hpp"
#include "emsdeploy/geogrid.hpp"
#include "emsdeploy/ingest.hpp"

namespace emsdeploy {

inline constexpr std::array<const char*, 19> kSviColumns = {
    "E_TOTPOP", "E_HU",     "E_HH",    "E_POV",    "E_UNEMP", "E_NOHSDP", "E_AGE65",
    "E_AGE17",  "E_DISABL", "E_SNGPNT", "E_MINRTY", "E_LIMENG", "E_MUNIT", "E_MOBILE",
    "E_CROWD",  "E_NOVEH",  "E_GROUPQ", "E_UNINSUR", "E_DAYPOP"};

inline constexpr std::size_t kMinTimeColumn = 0;
inline constexpr std::size_t kAvgTimeColumn = 1;
inline constexpr std::size_t kFeatureCount = 2 + kSviColumns.size();

/// One row per census tract. Features: min.station.time, avg.station.time,
/// then the SVI columns. Times are in minutes.
struct TractDataset {
  std::vector<std::string> tract_ids;
  Eigen::VectorXd y;
  Eigen::MatrixXd features;
  std::size_t dropped_missing_svi = 0;

  static std::vector<std::string> column_names() {
    std::vector<std::string> names{"min.station.time", "avg.station.time"};
    for (const auto* c : kSviColumns) names.emplace_back(c);
    return names;
  }
  std::size_t rows() const { return tract_ids.size(); }
};

using SviTable = std::map<std::string, std::array<double, kSviColumns.size()>>;
using TractMap = std::map<std::size_t, std::string>;  // cell -> tract id

inline SviTable load_svi_table(const std::string& path, const std::string& id_column = "tract_id") {
  auto lines = read_lines(path);
  if (lines.empty()) throw SchemaError(path + ": empty SVI file");
  auto header = split_csv_line(lines[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(trim(header[i])), i);
  std::string missing;
  if (!col.count(id_column)) missing += " " + id_column;
  for (const auto* c : kSviColumns)
    if (!col.count(c)) missing += std::string(" ") + c;
  if (!missing.empty()) throw SchemaError(path + ": missing SVI columns:" + missing);
  SviTable table;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    auto f = split_csv_line(lines[ln]);
    std::array<double, kSviColumns.size()> row{};
    for (std::size_t k = 0; k < kSviColumns.size(); ++k) {
      auto i = col[kSviColumns[k]];
      if (i >= f.size() || !parse_double(f[i], row[k]))
        throw ParseError(path + ": line " + std::to_string(ln + 1) + " has a bad " + kSviColumns[k]);
    }
    table[std::string(trim(f[col[id_column]]))] = row;
  }
  return table;
}

inline TractMap load_tract_map(const std::string& path) {
  auto lines = read_lines(path);
  TractMap map;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    auto f = split_csv_line(lines[ln]);
    std::size_t cell = 0;
    if (f.size() < 2 || !parse_int(f[0], cell)) throw ParseError(path + ": line " + std::to_string(ln + 1) + " is malformed");
    map[cell] = std::string(trim(f[1]));
  }
  return map;
}

/// Per tract: mean reported travel time of its calls (minutes), and the
/// call-weighted average over its cells of each cell's minimum and mean
/// station travel time (minutes).
inline TractDataset assemble_tracts(std::span<const CallRecord> calls, const Grid& grid, const TractMap& tract_map,
                                    const SviTable& svi, double snap_cells = 1.0) {
  std::vector<double> cell_min(grid.num_cells(), 0.0), cell_avg(grid.num_cells(), 0.0);
  for (std::size_t j = 0; j < grid.num_cells(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), sum = 0.0;
    for (std::size_t i = 0; i < grid.num_stations(); ++i) {
      lo = std::min(lo, grid.station_time(i, j));
      sum += grid.station_time(i, j);
    }
    cell_min[j] = grid.num_stations() ? lo / 60.0 : 0.0;
    cell_avg[j] = grid.num_stations() ? sum / static_cast<double>(grid.num_stations()) / 60.0 : 0.0;
  }
  struct Acc {
    double reported = 0.0, w_min = 0.0, w_avg = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& c : calls) {
    if (!c.reported_travel_s) continue;
    std::size_t cell = 0;
    try {
      cell = assign_cell(grid, c.lat, c.lon, snap_cells);
    } catch (const OutOfBounds&) {
      continue;
    }
    auto it = tract_map.find(cell);
    if (it == tract_map.end()) continue;
    auto& a = acc[it->second];
    a.reported += *c.reported_travel_s / 60.0;
    a.w_min += cell_min[cell];
    a.w_avg += cell_avg[cell];
    ++a.n;
  }
  TractDataset ds;
  std::vector<std::array<double, kFeatureCount>> rows;
  std::vector<double> ys;
  for (const auto& [tract, a] : acc) {
    auto s = svi.find(tract);
    if (s == svi.end()) {
      ++ds.dropped_missing_svi;
      continue;
    }
    auto n = static_cast<double>(a.n);
    std::array<double, kFeatureCount> row{};
    row[kMinTimeColumn] = a.w_min / n;
    row[kAvgTimeColumn] = a.w_avg / n;
    std::copy(s->second.begin(), s->second.end(), row.begin() + 2);
    ds.tract_ids.push_back(tract);
    rows.push_back(row);
    ys.push_back(a.reported / n);
  }
  ds.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < kFeatureCount; ++c)
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return ds;
}

// ---------------------------------------------------------------------------

struct StandardizeStats {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;
  std::vector<bool> zero_variance;
};

/// Centers and scales columns with the train mean and sample std (n-1).
/// Zero-variance train columns are set to zero in both outputs.
inline std::tuple<Eigen::MatrixXd, Eigen::MatrixXd, StandardizeStats> standardize_fold(const Eigen::MatrixXd& train,
                                                                                        const Eigen::MatrixXd& test) {
  if (train.rows() < 2) throw DataError("standardization needs at least 2 training rows");
  StandardizeStats st;
  st.mean = train.colwise().mean();
  st.std.resize(train.cols());
  st.zero_variance.assign(static_cast<std::size_t>(train.cols()), false);
  for (Eigen::Index c = 0; c < train.cols(); ++c) {
    double ss = (train.col(c).array() - st.mean(c)).square().sum();
    st.std(c) = std::sqrt(ss / static_cast<double>(train.rows() - 1));
    if (!(st.std(c) > 0.0)) st.zero_variance[static_cast<std::size_t>(c)] = true;
  }
  auto apply = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (st.zero_variance[static_cast<std::size_t>(c)]) out.col(c).setZero();
      else out.col(c) = (m.col(c).array() - st.mean(c)) / st.std(c);
    }
    return out;
  };
  return {apply(train), apply(test), st};
}

struct LinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  std::size_t sweeps = 0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    if (coef.size() == 0) return Eigen::VectorXd::Constant(X.rows(), intercept);
    return (X * coef).array() + intercept;
  }
};

/// Least squares with intercept via normal equations; a 1e-8 ridge is added
/// when the Gram matrix is singular.
inline LinearModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n == 0) throw DataError("OLS needs at least one row");
  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  Eigen::MatrixXd gram = A.transpose() * A;
  Eigen::VectorXd rhs = A.transpose() * y;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd beta;
  bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                  ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().cwiseAbs().maxCoeff());
  if (singular) {
    gram.diagonal().array() += 1e-8;
    beta = gram.ldlt().solve(rhs);
  } else {
    beta = ldlt.solve(rhs);
  }
  LinearModel m;
  m.intercept = beta(0);
  m.coef = beta.tail(p);
  return m;
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

/// Objective RSS / (2n) + lambda * |coef|_1 (intercept unpenalized).
inline double lasso_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LinearModel& m,
                              double lambda) {
  Eigen::VectorXd r = y - m.predict(X);
  return r.squaredNorm() / (2.0 * static_cast<double>(X.rows())) + lambda * m.coef.lpNorm<1>();
}

class LassoNotConverged : public SolverError {
 public:
  LassoNotConverged(const std::string& what, LinearModel last) : SolverError(what), last_iterate(std::move(last)) {}
  LinearModel last_iterate;
};

/// Cyclic coordinate descent with soft-thresholding. Converged when the
/// largest coefficient change in a sweep drops below `tol`.
inline LinearModel fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, double tol = 1e-10,
                             std::size_t max_sweeps = 100000, std::vector<double>* objective_trace = nullptr) {
  if (!(tol > 0.0)) throw ConfigError("lasso tolerance must be positive");
  if (lambda < 0.0) throw ConfigError("lasso lambda must be nonnegative");
  const Eigen::Index n = X.rows(), p = X.cols();
  const double nd = static_cast<double>(n);
  LinearModel m;
  m.coef = Eigen::VectorXd::Zero(p);
  m.intercept = y.mean();
  Eigen::VectorXd col_sq = X.colwise().squaredNorm().transpose() / nd;
  Eigen::VectorXd resid = y.array() - m.intercept;
  for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq(j) <= 0.0) continue;
      double old = m.coef(j);
      double rho = X.col(j).dot(resid) / nd + col_sq(j) * old;
      double updated = soft_threshold(rho, lambda) / col_sq(j);
      if (updated != old) {
        resid -= X.col(j) * (updated - old);
        m.coef(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    double shift = resid.mean();
    m.intercept += shift;
    resid.array() -= shift;
    max_change = std::max(max_change, std::abs(shift));
    m.sweeps = sweep;
    if (objective_trace) objective_trace->push_back(lasso_objective(X, y, m, lambda));
    if (max_change < tol) return m;
  }
  throw LassoNotConverged("lasso did not converge in " + std::to_string(max_sweeps) + " sweeps", m);
}

// ---------------------------------------------------------------------------

struct ModelReport {
  std::string label;
  std::string variables;
  std::vector<double> fold_mse;
  double average_mse = 0.0;
  std::size_t rank = 0;                // 1 = lowest average MSE
  std::vector<double> chosen_lambda;   // LASSO only, one per fold
};

inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int e = -3; e <= 1; ++e)
    for (double m : {1.0, 3.0})
      if (!(e == 1 && m == 3.0)) g.push_back(m * std::pow(10.0, e));
  return g;
}

namespace detail {

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

inline Eigen::VectorXd take(const Eigen::VectorXd& v, std::span<const std::size_t> idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(static_cast<Eigen::Index>(idx[r]));
  return out;
}

inline double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

/// Lambda with the lowest inner k-fold MSE on a (standardized) train fold.
/// Candidates whose fit fails to converge on some inner fold are skipped;
/// if every candidate fails, the last failure propagates.
inline double select_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const double> grid,
                            std::size_t k, std::uint64_t seed) {
  auto n = static_cast<std::size_t>(X.rows());
  std::size_t inner_k = std::min<std::size_t>(k, n);
  if (inner_k < 2 || grid.size() == 1) return grid.front();
  auto fold = kfold_assignment(n, inner_k, seed);
  std::optional<double> best;
  double best_mse = std::numeric_limits<double>::infinity();
  std::optional<LassoNotConverged> failure;
  for (double lambda : grid) {
    double total = 0.0;
    try {
      for (std::size_t f = 0; f < inner_k; ++f) {
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(i);
        auto m = fit_lasso(take_rows(X, tr), take(y, tr), lambda, 1e-8);
        total += mse(m.predict(take_rows(X, te)), take(y, te));
      }
    } catch (const LassoNotConverged& e) {
      failure = e;
      continue;
    }
    if (!best || total < best_mse) {
      best_mse = total;
      best = lambda;
    }
  }
  if (!best) throw *failure;
  return *best;
}

}  // namespace detail

/// The five-model comparison over identical seeded folds: train mean, OLS on
/// min time, OLS on avg time, OLS on both, LASSO on all 21 columns with
/// lambda picked by nested CV on each train fold.
inline std::vector<ModelReport> compare_models(const TractDataset& ds, std::size_t k = 5, std::uint64_t seed = 0,
                                               std::vector<double> lambda_grid = default_lambda_grid()) {
  if (k < 2) throw ConfigError("model comparison needs k >= 2");
  if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
  auto n = ds.rows();
  auto fold = kfold_assignment(n, k, seed);
  std::vector<ModelReport> reports = {
      {"Mean in the train set", "N/A", {}, 0.0, 0, {}},
      {"Linear Regression", "min.station.time", {}, 0.0, 0, {}},
      {"Linear Regression", "avg.station.time", {}, 0.0, 0, {}},
      {"Linear Regression", "min.station.time + avg.station.time", {}, 0.0, 0, {}},
      {"Lasso", "All 21 variables", {}, 0.0, 0, {}},
  };
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(i);
    auto [Xtr, Xte, stats] = standardize_fold(detail::take_rows(ds.features, tr), detail::take_rows(ds.features, te));
    Eigen::VectorXd ytr = detail::take(ds.y, tr), yte = detail::take(ds.y, te);

    reports[0].fold_mse.push_back(detail::mse(Eigen::VectorXd::Constant(yte.size(), ytr.mean()), yte));
    auto ols_cols = [&](std::vector<Eigen::Index> cols) {
      Eigen::MatrixXd a(Xtr.rows(), static_cast<Eigen::Index>(cols.size()));
      Eigen::MatrixXd b(Xte.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) {
        a.col(static_cast<Eigen::Index>(c)) = Xtr.col(cols[c]);
        b.col(static_cast<Eigen::Index>(c)) = Xte.col(cols[c]);
      }
      return detail::mse(fit_ols(a, ytr).predict(b), yte);
    };
    reports[1].fold_mse.push_back(ols_cols({kMinTimeColumn}));
    reports[2].fold_mse.push_back(ols_cols({kAvgTimeColumn}));
    reports[3].fold_mse.push_back(ols_cols({kMinTimeColumn, kAvgTimeColumn}));
    double lambda = detail::select_lambda(Xtr, ytr, lambda_grid, k, derive_seed(seed, "lasso-inner", f));
    reports[4].chosen_lambda.push_back(lambda);
    reports[4].fold_mse.push_back(detail::mse(fit_lasso(Xtr, ytr, lambda, 1e-8).predict(Xte), yte));
  }
  for (auto& r : reports) r.average_mse = mean_of(r.fold_mse);
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return reports[a].average_mse < reports[b].average_mse; });
  for (std::size_t r = 0; r < order.size(); ++r) reports[order[r]].rank = r + 1;
  return reports;
}

inline std::string model_reports_csv(std::span<const ModelReport> reports) {
  std::string out = "Model,Variables,Average MSE\n";
  for (const auto& r : reports)
    out += csv_escape(r.label) + "," + csv_escape(r.variables) + "," + format_fixed(r.average_mse, 4) + "\n";
  return out;
}

}  // namespace emsdeploy
