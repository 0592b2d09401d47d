#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "pmala/mcmc.hpp"
#include "pmala/parallel.hpp"
#include "pmala/particle_filter.hpp"
#include "pmala/rng.hpp"

namespace pmala {

struct EssResult {
  double ess = 0.0;
  bool capped = false;      ///< raw estimate exceeded J (antithetic chain)
  bool degenerate = false;  ///< constant series
};

/// Autocorrelations rho_0..rho_{J-1} via zero-padded FFT.
inline std::vector<double> autocorrelation(std::span<const double> x) {
  const std::size_t J = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(J);
  std::size_t len = 1;
  while (len < 2 * J) len <<= 1;
  std::vector<double> padded(len, 0.0);
  for (std::size_t i = 0; i < J; ++i) padded[i] = x[i] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  for (auto& c : spec) c = std::norm(c);
  std::vector<double> acov;
  fft.inv(acov, spec);
  std::vector<double> rho(J, 0.0);
  if (!(acov[0] > 0.0)) return rho;
  for (std::size_t k = 0; k < J; ++k) rho[k] = acov[k] / acov[0];
  return rho;
}

/// J / (1 + 2 sum rho_k) with Geyer's initial monotone sequence truncation.
inline EssResult ess(std::span<const double> x) {
  const std::size_t J = x.size();
  if (J < 10) throw std::invalid_argument("ess requires at least 10 values");
  EssResult r;
  const double first = x[0];
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == first; })) {
    r.degenerate = true;
    return r;
  }
  const auto rho = autocorrelation(x);
  // Gamma_m = rho_{2m} + rho_{2m+1}; keep the initial positive, monotone part
  double sum = 0.0, prev = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < J; ++m) {
    double gamma = rho[2 * m] + rho[2 * m + 1];
    if (gamma <= 0.0) break;
    gamma = std::min(gamma, prev);
    sum += gamma;
    prev = gamma;
  }
  const double tau = -1.0 + 2.0 * sum;
  const double dJ = static_cast<double>(J);
  if (!(tau > 1.0)) {
    r.ess = dJ;
    r.capped = tau < 1.0;
    return r;
  }
  r.ess = dJ / tau;
  return r;
}

/// ESS of every column; the minimum is the usual summary.
inline std::vector<EssResult> ess_columns(const Eigen::MatrixXd& states) {
  std::vector<EssResult> out;
  std::vector<double> col(static_cast<std::size_t>(states.rows()));
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    for (Eigen::Index i = 0; i < states.rows(); ++i) col[static_cast<std::size_t>(i)] = states(i, j);
    out.push_back(ess(col));
  }
  return out;
}

inline double min_ess(const std::vector<EssResult>& v) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& e : v) m = std::min(m, e.ess);
  return v.empty() ? 0.0 : m;
}

/// Mean squared jump (1/(J-1)) sum ||x_{j+1} - x_j||^2; rejections add 0.
inline double esjd(const Eigen::MatrixXd& states) {
  if (states.rows() < 2) throw std::invalid_argument("esjd requires at least 2 states");
  double s = 0.0;
  for (Eigen::Index j = 1; j < states.rows(); ++j) s += (states.row(j) - states.row(j - 1)).squaredNorm();
  return s / static_cast<double>(states.rows() - 1);
}

inline double esjd(const ChainTrace& trace) { return esjd(trace.kept_states()); }

struct MomentSummary {
  double mean = 0.0, variance = 0.0, skewness = 0.0, excess_kurtosis = 0.0;
};

/// Sample moments; the variance uses the n-1 divisor. Summation is done on
/// a sorted copy so the result does not depend on input order.
inline MomentSummary sample_moments(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("sample_moments requires at least 2 values");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  MomentSummary m;
  for (double a : s) m.mean += a;
  m.mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double a : s) {
    const double d = a - m.mean, d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m.variance = m2 / (n - 1.0);
  m2 /= n, m3 /= n, m4 /= n;
  if (m2 > 0.0) {
    m.skewness = m3 / std::pow(m2, 1.5);
    m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return m;
}

/// Ordinary least squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

struct NoiseStudyRow {
  std::size_t point_id = 0;
  std::size_t N = 0;
  double mean_loglik = 0.0;
  double var_logpost = 0.0;  ///< variance of log p-hat (= variance of log pi-hat)
  double skew = 0.0;
  double kurt = 0.0;         ///< excess kurtosis
  std::vector<double> samples;  ///< raw log p-hat replicates
};

struct NoiseStudyReport {
  std::vector<NoiseStudyRow> rows;
  double slope = 0.0;  ///< slope of log10 var against log10 N, averaged over points
  std::vector<std::string> warnings;
};

/// Repeated likelihood estimates at each point and particle count.
/// Replicate seeds are derived from (seed, point, N, rep).
template <StateSpaceModel M, class Adapter>
  requires ProposalAdapter<Adapter, M>
NoiseStudyReport noise_study(const M& model, const ObservationSeries& data, const Adapter& adapter,
                             const std::vector<Eigen::VectorXd>& points, const std::vector<std::size_t>& n_grid,
                             std::size_t replicates, std::uint64_t seed, std::size_t workers = 1) {
  if (replicates < 100) throw std::invalid_argument("noise_study requires at least 100 replicates");
  if (points.empty() || n_grid.empty()) throw std::invalid_argument("noise_study requires points and an N grid");
  NoiseStudyReport report;
  const std::size_t cells = points.size() * n_grid.size();
  std::vector<std::vector<double>> draws(cells, std::vector<double>(replicates));
  std::vector<char> failed(cells, 0);
  parallel_for(cells * replicates, workers, [&](std::size_t job) {
    const std::size_t cell = job / replicates, rep = job % replicates;
    const std::size_t pi = cell / n_grid.size(), ni = cell % n_grid.size();
    Rng rng = make_rng(seed, {pi, n_grid[ni], rep});
    FilterOptions opts;
    opts.n_particles = n_grid[ni];
    try {
      draws[cell][rep] = run_apf(model, points[pi], data, adapter, rng, opts).log_likelihood;
    } catch (const DegenerateFilterError&) {
      failed[cell] = 1;
    }
  });

  std::vector<char> point_dropped(points.size(), 0);
  for (std::size_t c = 0; c < cells; ++c)
    if (failed[c]) point_dropped[c / n_grid.size()] = 1;
  for (std::size_t p = 0; p < points.size(); ++p)
    if (point_dropped[p]) report.warnings.push_back("point " + std::to_string(p) + " dropped: degenerate filter");

  std::vector<double> logn, logv;
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t p = c / n_grid.size();
    if (point_dropped[p]) continue;
    const auto m = sample_moments(draws[c]);
    NoiseStudyRow row{p, n_grid[c % n_grid.size()], m.mean, m.variance, m.skewness, m.excess_kurtosis, draws[c]};
    if (m.variance > 0.0 && n_grid.size() > 1) {
      logn.push_back(std::log10(static_cast<double>(row.N)));
      logv.push_back(std::log10(m.variance));
    }
    report.rows.push_back(std::move(row));
  }
  if (logn.size() >= 2) report.slope = ols_slope(logn, logv);
  return report;
}

inline void write_noise_csv(std::ostream& os, const NoiseStudyReport& r) {
  os << "point_id,N,var_logpost,skew,kurt\n";
  os.precision(10);
  for (const auto& row : r.rows)
    os << row.point_id << ',' << row.N << ',' << row.var_logpost << ',' << row.skew << ',' << row.kurt << '\n';
}

struct RegimeDeltaRow {
  std::size_t point_id = 0;
  std::size_t rep = 0;
  double delta_a = 0.0;  ///< log pi(x*) - log pi(x)
  double delta_b = 0.0;  ///< log pi(x') - log pi(x*)
  double delta_c = 0.0;  ///< log pi-hat(x') - log pi(x')
  double total = 0.0;    ///< log pi-hat(x') - log pi(x)
};

struct RegimeDeltas {
  std::vector<RegimeDeltaRow> rows;
  std::size_t dropped = 0;  ///< replicates with a degenerate estimate
};

/// Exact log posterior and gradient used as the reference.
using ExactOracle = std::function<TargetEvaluation(const Eigen::VectorXd&)>;

/// Splits the proposed change in log posterior into the exact-gradient move
/// (A), the gradient-error contribution (B) and the likelihood-estimate noise
/// (C). x* and x' share the same normal draw. The current state's log
/// posterior is taken as exact.
template <PosteriorTarget T>
RegimeDeltas regime_deltas(const T& noisy, const ExactOracle& exact, const Kernel& kernel,
                           const std::vector<Eigen::VectorXd>& points, std::size_t replicates, std::uint64_t seed,
                           std::size_t workers = 1) {
  if (!exact) throw std::invalid_argument("regime_deltas requires an exact reference");
  if (points.empty() || replicates < 1) throw std::invalid_argument("regime_deltas requires points and replicates");
  const auto n = static_cast<Eigen::Index>(kernel.dimension());
  std::vector<TargetEvaluation> at_x;
  for (const auto& x : points) {
    auto ev = exact(x);
    if (!ev.ok() || ev.grad.size() != n) throw std::invalid_argument("exact reference failed at a diagnostic point");
    at_x.push_back(std::move(ev));
  }
  const std::size_t jobs = points.size() * replicates;
  std::vector<RegimeDeltaRow> rows(jobs);
  std::vector<char> ok(jobs, 0);
  parallel_for(jobs, workers, [&](std::size_t job) {
    const std::size_t p = job / replicates, rep = job % replicates;
    Rng rng = make_rng(seed, {p, rep});
    std::normal_distribution<double> n01;
    Eigen::VectorXd z(n);
    for (auto& v : z) v = n01(rng);
    const auto est_x = noisy.evaluate(points[p], rng);
    if (!est_x.ok() || est_x.grad.size() != n) return;
    const auto x_star = kernel.propose_with(ChainState{points[p], at_x[p].log_post, at_x[p].grad, 0, false}, z).y;
    const auto x_prime = kernel.propose_with(ChainState{points[p], at_x[p].log_post, est_x.grad, 0, false}, z).y;
    const auto pi_star = exact(x_star), pi_prime = exact(x_prime);
    const auto hat_prime = noisy.evaluate(x_prime, rng);
    if (!pi_star.ok() || !pi_prime.ok() || !hat_prime.ok()) return;
    auto& r = rows[job];
    r.point_id = p;
    r.rep = rep;
    r.delta_a = pi_star.log_post - at_x[p].log_post;
    r.delta_b = pi_prime.log_post - pi_star.log_post;
    r.delta_c = hat_prime.log_post - pi_prime.log_post;
    r.total = hat_prime.log_post - at_x[p].log_post;
    ok[job] = 1;
  });
  RegimeDeltas out;
  for (std::size_t j = 0; j < jobs; ++j) {
    if (ok[j])
      out.rows.push_back(rows[j]);
    else
      ++out.dropped;
  }
  return out;
}

inline double median_abs(std::vector<double> v) {
  if (v.empty()) return 0.0;
  for (auto& a : v) a = std::abs(a);
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

struct RegimeDeltaSummary {
  double median_abs_a = 0.0, median_abs_b = 0.0, median_abs_c = 0.0;
};

inline RegimeDeltaSummary summarize(const RegimeDeltas& d) {
  std::vector<double> a, b, c;
  for (const auto& r : d.rows) a.push_back(r.delta_a), b.push_back(r.delta_b), c.push_back(r.delta_c);
  return {median_abs(a), median_abs(b), median_abs(c)};
}

/// "rep,deltaA,deltaB,deltaC" with rep numbered across points.
inline void write_regime_csv(std::ostream& os, const RegimeDeltas& d) {
  os << "rep,deltaA,deltaB,deltaC\n";
  os.precision(12);
  std::size_t i = 0;
  for (const auto& r : d.rows) os << ++i << ',' << r.delta_a << ',' << r.delta_b << ',' << r.delta_c << '\n';
}

}  // namespace pmala
