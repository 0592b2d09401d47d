#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pmala/diagnostics.hpp"
#include "pmala/parallel.hpp"
#include "pmala/particle_filter.hpp"
#include "pmala/rng.hpp"

namespace pmala {

struct ScoreVarianceRow {
  std::size_t T = 0;
  Eigen::VectorXd mean;      ///< per-component mean of the score estimates
  Eigen::VectorXd variance;  ///< per-component sample variance
};

struct ScoreVarianceTable {
  std::vector<ScoreVarianceRow> rows;

  /// Per-component OLS slope of log variance against log T.
  Eigen::VectorXd slopes() const {
    if (rows.size() < 2) throw std::logic_error("slopes need at least two T values");
    const auto n = rows.front().variance.size();
    std::vector<double> lt;
    for (const auto& r : rows) lt.push_back(std::log(static_cast<double>(r.T)));
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> lv;
      for (const auto& r : rows) lv.push_back(std::log(r.variance[i]));
      s[i] = ols_slope(lt, lv);
    }
    return s;
  }
};

/// Replicated score estimates on prefixes z_{1:T} for each T in the grid.
/// Replicate seeds are derived from (seed, T, rep).
template <StateSpaceModel M, class Adapter>
  requires ProposalAdapter<Adapter, M>
ScoreVarianceTable score_variance_study(const M& model, const Eigen::VectorXd& x, const ObservationSeries& data,
                                        const Adapter& adapter, std::size_t N, double zeta,
                                        const std::vector<std::size_t>& t_grid, std::size_t replicates,
                                        std::uint64_t seed, std::size_t workers = 1) {
  if (replicates < 50) throw std::invalid_argument("score_variance_study requires at least 50 replicates");
  for (auto T : t_grid)
    if (T < 1 || T > data.size()) throw std::invalid_argument("T grid entries must lie in [1, data length]");
  const auto n = static_cast<Eigen::Index>(model.n_params());
  std::vector<ObservationSeries> prefixes;
  for (auto T : t_grid) prefixes.push_back(data.head(T));
  std::vector<Eigen::MatrixXd> draws(t_grid.size(), Eigen::MatrixXd(static_cast<Eigen::Index>(replicates), n));

  FilterOptions opts;
  opts.n_particles = N;
  opts.with_score = true;
  opts.zeta = zeta;
  parallel_for(t_grid.size() * replicates, workers, [&](std::size_t job) {
    const std::size_t ti = job / replicates, rep = job % replicates;
    Rng rng = make_rng(seed, {t_grid[ti], rep});
    const auto out = run_apf(model, x, prefixes[ti], adapter, rng, opts);
    draws[ti].row(static_cast<Eigen::Index>(rep)) = out.score->transpose();
  });

  ScoreVarianceTable table;
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    const auto& d = draws[ti];
    ScoreVarianceRow row;
    row.T = t_grid[ti];
    row.mean = d.colwise().mean().transpose();
    const Eigen::MatrixXd c = d.rowwise() - row.mean.transpose();
    row.variance = c.colwise().squaredNorm().transpose() / static_cast<double>(replicates - 1);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace pmala
