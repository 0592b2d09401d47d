#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/tools/minima.hpp>

#include "pmala/math.hpp"
#include "pmala/parallel.hpp"
#include "pmala/rng.hpp"

namespace pmala::theory {

inline double norm_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

/// E(1 ^ e^U) for U ~ N(a, b^2).
inline double gaussian_min_exp_moment(double a, double b) {
  if (!(b >= 0.0)) throw std::domain_error("gaussian_min_exp_moment requires b >= 0");
  if (b == 0.0) return std::min(1.0, std::exp(a));
  const double r = a / b;
  // e^{a + b^2/2} Phi(-b - a/b) overflows naively for large a; the product is < 1
  const double tail = norm_cdf(-b - r);
  const double second = tail > 0.0 ? std::exp(a + 0.5 * b * b + std::log(tail)) : 0.0;
  return std::clamp(norm_cdf(r) + second, 0.0, 1.0);
}

struct Roughness {
  double K = 1.0;        ///< sqrt(E[5 g'''^2 - 3 g''^3] / 48)
  double K_star2 = 0.0;  ///< E[b^2] + tau^2 / 2
  double K_star_star = 0.0;  ///< -E[b' g''] / 4

  void validate() const {
    if (!(K > 0.0)) throw std::domain_error("roughness K must be positive");
    if (!(K_star2 >= 0.0)) throw std::domain_error("roughness K*^2 must be non-negative");
    if (!std::isfinite(K_star_star)) throw std::domain_error("roughness K** must be finite");
  }
};

inline constexpr double kCriticalKappa = 1.0 / 3.0;

/// 1: kappa < 1/3 (gradient error dominates), 2: kappa = 1/3, 3: kappa > 1/3.
inline int regime_of(double kappa) {
  if (!(kappa >= 0.0)) throw std::domain_error("kappa must be non-negative");
  if (std::abs(kappa - kCriticalKappa) <= 1e-12) return 2;
  return kappa < kCriticalKappa ? 1 : 3;
}

struct RegimeSpec {
  double kappa = std::numeric_limits<double>::infinity();
  Roughness roughness;
  double sigma2 = 0.0;

  int regime() const { return regime_of(kappa); }
  void validate() const {
    regime_of(kappa);
    if (!(sigma2 >= 0.0)) throw std::domain_error("sigma^2 must be non-negative");
  }
};

/// The ell-dependent part of the acceptance exponent for the regime.
inline double acceptance_discriminant(const RegimeSpec& r, double ell) {
  const auto& k = r.roughness;
  const double l2 = ell * ell, l4 = l2 * l2, l6 = l4 * l2;
  switch (r.regime()) {
    case 1: return l2 * k.K_star2;
    case 2: {
      const double d = l6 * k.K * k.K + 2.0 * l4 * k.K_star_star + l2 * k.K_star2;
      const double scale = l6 * k.K * k.K + 2.0 * l4 * std::abs(k.K_star_star) + l2 * k.K_star2;
      if (d < 0.0 && d >= -1e-13 * scale) return 0.0;
      return d;
    }
    default: return l6 * k.K * k.K;
  }
}

/// Limiting acceptance rate 2 Phi(-sqrt(D(ell) + 2 sigma^2) / 2).
inline double limiting_acceptance(const RegimeSpec& r, double ell) {
  r.validate();
  if (!(ell > 0.0)) throw std::domain_error("ell must be positive");
  const double d = acceptance_discriminant(r, ell);
  if (d < 0.0)
    throw std::domain_error("negative acceptance discriminant (" + std::to_string(d) +
                            "): roughness violates K**^2 <= K*^2 K^2");
  return 2.0 * norm_cdf(-0.5 * std::sqrt(d + 2.0 * r.sigma2));
}

/// Same quantity via E(1 ^ e^U), U ~ N(-s^2/2, s^2) with s^2 = D + 2 sigma^2.
inline double limiting_acceptance_via_moment(const RegimeSpec& r, double ell) {
  r.validate();
  const double d = acceptance_discriminant(r, ell);
  if (d < 0.0) throw std::domain_error("negative acceptance discriminant");
  const double s2 = d + 2.0 * r.sigma2;
  return gaussian_min_exp_moment(-0.5 * s2, std::sqrt(s2));
}

/// sigma^2 ell^2 alpha(ell, sigma^2).
inline double efficiency(const RegimeSpec& r, double ell) { return r.sigma2 * ell * ell * limiting_acceptance(r, ell); }

/// ell giving the requested acceptance rate, by bisection on the monotone
/// acceptance curve (relative tolerance 1e-10).
inline double ell_for_acceptance(const RegimeSpec& r, double alpha) {
  r.validate();
  if (r.regime() == 2 && r.roughness.K_star_star < 0.0)
    throw std::domain_error("acceptance curve is not monotone when K** < 0");
  const double top = 2.0 * norm_cdf(-std::sqrt(0.5 * r.sigma2));
  if (!(alpha > 0.0 && alpha < top)) throw std::domain_error("acceptance rate outside (0, 2 Phi(-sigma/sqrt 2))");
  double lo = 0.0, hi = 1.0;
  while (limiting_acceptance(r, hi) > alpha) hi *= 2.0;
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    (mid > 0.0 && limiting_acceptance(r, mid) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct OptimalParams {
  double ell = 0.0;
  double sigma2 = 0.0;
  double alpha = 0.0;
  double a_hat = 0.0;  ///< maximizer of a^{8/3} Phi(-a)
};

/// Joint optimum of the regime-3 efficiency over (ell, sigma^2).
inline OptimalParams optimal_params(double K) {
  if (!(K > 0.0)) throw std::domain_error("optimal_params requires K > 0");
  auto neg_log = [](double a) { return -(8.0 / 3.0) * std::log(a) - std::log(norm_cdf(-a)); };
  const auto [a, _] = boost::math::tools::brent_find_minima(neg_log, 0.1, 10.0, std::numeric_limits<double>::digits);
  OptimalParams o;
  o.a_hat = a;
  o.sigma2 = 1.5 * a * a;
  o.ell = std::cbrt(a / K);
  o.alpha = 2.0 * norm_cdf(-a);
  return o;
}

/// One-dimensional target density f = e^g known up to a constant, with the
/// derivatives the limit theory needs and an exact sampler.
struct LimitDensity {
  std::function<double(double)> g, dg, d2g, d3g;
  std::function<double(Rng&)> sample;
};

inline LimitDensity standard_gaussian_density() {
  return {[](double x) { return -0.5 * x * x; }, [](double x) { return -x; }, [](double) { return -1.0; },
          [](double) { return 0.0; }, [](Rng& rng) { return std::normal_distribution<double>()(rng); }};
}

/// Gradient estimate g'(x) + n^{-kappa} (b(x) + tau U).
struct GradientErrorModel {
  double kappa = std::numeric_limits<double>::infinity();
  std::function<double(double)> b;   ///< empty means b = 0
  std::function<double(double)> db;  ///< derivative of b; empty means 0
  double tau = 0.0;
  std::function<double(Rng&)> noise;  ///< mean 0, variance 1; empty means standard normal

  double bias(double x) const { return b ? b(x) : 0.0; }
  double bias_derivative(double x) const { return db ? db(x) : 0.0; }
  double draw_noise(Rng& rng) const { return noise ? noise(rng) : std::normal_distribution<double>()(rng); }

  /// Checks tau >= 0 and that the noise sampler has mean 0 and variance 1
  /// to within 3 standard errors over 1e5 draws.
  void validate(std::uint64_t seed = 0x5eed) const {
    if (!(tau >= 0.0)) throw std::domain_error("gradient noise scale tau must be non-negative");
    if (!(kappa >= 0.0)) throw std::domain_error("kappa must be non-negative");
    if (!noise) return;
    constexpr int n = 100000;
    Rng rng(seed);
    double s1 = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
      const double u = noise(rng);
      s1 += u;
      s2 += u * u;
      s4 += u * u * u * u;
    }
    const double mean = s1 / n, m2 = s2 / n, m4 = s4 / n;
    const double se_mean = std::sqrt(m2 / n), se_var = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    if (std::abs(mean) > 3.0 * se_mean) throw std::domain_error("gradient noise sampler does not have mean 0");
    if (std::abs(m2 - mean * mean - 1.0) > 3.0 * se_var) throw std::domain_error("gradient noise sampler does not have variance 1");
  }
};

namespace detail {

template <class F>
double integrate_line(F f, double tol, const char* what) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double err = 0.0, l1 = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, tol, &err, &l1);
  if (std::isfinite(v) && err <= std::max(1e-10, tol * l1)) return v;
  boost::math::quadrature::sinh_sinh<double> ss;
  double err2 = 0.0, l12 = 0.0;
  const double v2 = ss.integrate(f, tol, &err2, &l12);
  if (std::isfinite(v2) && err2 <= std::max(1e-10, 1e3 * tol * l12)) return v2;
  throw std::runtime_error(std::string("quadrature did not converge for ") + what + " (residual " +
                           std::to_string(std::min(err, err2)) + ")");
}

}  // namespace detail

/// Roughness constants by quadrature against f = e^g / int e^g.
inline Roughness roughness_from_density(const LimitDensity& d, const GradientErrorModel& e = {}) {
  if (!(e.tau >= 0.0)) throw std::domain_error("tau must be non-negative");
  constexpr double tol = 1e-12;
  auto f = [&](double x) {
    const double v = std::exp(d.g(x));
    return std::isfinite(v) ? v : 0.0;
  };
  const double Z = detail::integrate_line(f, tol, "normalizer");
  if (!(Z > 0.0)) throw std::runtime_error("density does not integrate to a positive value");
  auto expect = [&](auto h, const char* what) {
    return detail::integrate_line([&](double x) {
      const double w = f(x);
      return w == 0.0 ? 0.0 : w * h(x);
    }, tol, what) / Z;
  };
  Roughness r;
  const double k2 = expect([&](double x) {
    const double g2 = d.d2g(x), g3 = d.d3g(x);
    return 5.0 * g3 * g3 - 3.0 * g2 * g2 * g2;
  }, "K") / 48.0;
  if (!(k2 > 0.0)) throw std::domain_error("roughness K^2 is not positive for this density");
  r.K = std::sqrt(k2);
  r.K_star2 = (e.b ? expect([&](double x) { return e.b(x) * e.b(x); }, "K*") : 0.0) + 0.5 * e.tau * e.tau;
  r.K_star_star = e.db ? -0.25 * expect([&](double x) { return e.db(x) * d.d2g(x); }, "K**") : 0.0;
  return r;
}

struct MaximinOptions {
  double q_min = 1e-3, q_max = 1e3;  ///< range of (K*/K^{1/3})^2 for the mixed regime
  int n_q = 50;
  int n_c = 50;                      ///< K**/(K* K) swept over [0, 1]
  int n_alpha = 400;
};

struct MaximinResult {
  double alpha = 0.0;
  double worst_efficiency = 0.0;
};

namespace detail {

/// Scaled ell^2 as a function of the required exponent H = D(ell), for one
/// member of the regime family. kind 1: ell^2 = H; kind 3: ell^2 = H^{1/3};
/// kind 2: u^3 + 2 p u^2 + q u = H with p = c sqrt(q).
struct RegimeCurve {
  int kind = 1;
  double p = 0.0, q = 0.0;

  double ell2(double H) const {
    if (H <= 0.0) return 0.0;
    if (kind == 1) return H;
    if (kind == 3) return std::cbrt(H);
    auto h = [&](double u) { return ((u + 2.0 * p) * u + q) * u; };
    // p, q >= 0 so u^3 <= H bounds the root
    double lo = 0.0, hi = std::cbrt(H);
    if (q > 0.0) hi = std::min(hi, H / q);
    while (hi - lo > 1e-13 * hi) {
      const double mid = 0.5 * (lo + hi);
      (h(mid) < H ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

inline double required_exponent(double alpha, double sigma2) {
  const double z = norm_quantile(0.5 * alpha);
  return 4.0 * z * z - 2.0 * sigma2;
}

/// Maximize a unimodal function on (lo, hi): coarse grid then Brent.
template <class F>
std::pair<double, double> maximize_1d(F f, double lo, double hi, int grid) {
  double best_x = lo, best = -std::numeric_limits<double>::infinity();
  const double step = (hi - lo) / (grid + 1);
  int best_i = 0;
  for (int i = 1; i <= grid; ++i) {
    const double x = lo + i * step, v = f(x);
    if (v > best) best = v, best_x = x, best_i = i;
  }
  const double a = lo + std::max(best_i - 1, 0) * step, b = lo + std::min(best_i + 1, grid + 1) * step;
  const auto [x, nv] = boost::math::tools::brent_find_minima([&](double t) { return -f(t); }, a, b, 40);
  if (-nv > best) return {x, -nv};
  return {best_x, best};
}

}  // namespace detail

/// Acceptance rate maximizing the worst-case relative efficiency over the
/// regime family (regimes 1 and 3, and regime 2 with K** >= 0).
inline MaximinResult maximin_acceptance(double sigma, const MaximinOptions& opt = {}) {
  if (!(sigma > 0.0)) throw std::domain_error("maximin_acceptance requires sigma > 0");
  const double s2 = sigma * sigma;
  const double top = 2.0 * norm_cdf(-sigma / std::numbers::sqrt2);
  const double lo = 1e-9 * top, hi = top * (1.0 - 1e-9);

  std::vector<detail::RegimeCurve> family{{1, 0, 0}, {3, 0, 0}};
  for (int i = 0; i < opt.n_q; ++i) {
    const double t = opt.n_q == 1 ? 0.0 : static_cast<double>(i) / (opt.n_q - 1);
    const double q = opt.q_min * std::pow(opt.q_max / opt.q_min, t);
    for (int j = 0; j < opt.n_c; ++j) {
      const double c = opt.n_c == 1 ? 0.0 : static_cast<double>(j) / (opt.n_c - 1);
      family.push_back({2, c * std::sqrt(q), q});
    }
  }

  std::vector<double> jmax(family.size());
  for (std::size_t r = 0; r < family.size(); ++r) {
    const auto& rc = family[r];
    jmax[r] = detail::maximize_1d([&](double a) { return rc.ell2(detail::required_exponent(a, s2)) * a; }, lo, hi, 80)
                  .second;
  }
  auto worst = [&](double a) {
    const double H = detail::required_exponent(a, s2);
    double w = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < family.size(); ++r) w = std::min(w, family[r].ell2(H) * a / jmax[r]);
    return w;
  };
  const auto [a, w] = detail::maximize_1d(worst, lo, hi, opt.n_alpha);
  return {a, w};
}

struct LimitSimulationOptions {
  std::size_t n = 500;
  double ell = 1.0;
  double sigma2 = 0.0;
  std::size_t reps = 10000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct LimitSimulationResult {
  double acceptance = 0.0;
  double acceptance_se = 0.0;
  double scaled_esjd = 0.0;  ///< mean alpha ||Y - X||^2 / n^{min(2 kappa, 2/3)}
  double lambda = 0.0;
  std::size_t nonfinite_rejections = 0;
};

/// Product-target experiment: X ~ f^n, proposal with gradient error, noise
/// W ~ N(sigma^2/2, sigma^2) at X and V ~ N(-sigma^2/2, sigma^2) at Y, and
/// the exact per-component MH ratio. Replicate r uses substream (seed, r).
inline LimitSimulationResult simulate_limit(const LimitSimulationOptions& o, const LimitDensity& f,
                                            const GradientErrorModel& e = {}) {
  if (o.n < 1) throw std::invalid_argument("simulate_limit requires n >= 1");
  if (o.reps < 1000) throw std::invalid_argument("simulate_limit requires at least 1000 replicates");
  if (!(o.ell > 0.0) || !(o.sigma2 >= 0.0)) throw std::domain_error("simulate_limit requires ell > 0, sigma^2 >= 0");
  e.validate(derive_seed(o.seed, {0xa11ce}));
  const double dn = static_cast<double>(o.n);
  const double eps = std::max(0.0, kCriticalKappa - e.kappa);
  const double lambda = o.ell * std::pow(dn, -1.0 / 6.0 - eps);
  const double l2 = lambda * lambda;
  const double err_scale = std::pow(dn, -e.kappa);
  const double jump_scale = std::pow(dn, std::min(2.0 * e.kappa, 2.0 / 3.0));
  const double sd = std::sqrt(o.sigma2);

  std::vector<double> acc(o.reps), jump(o.reps);
  std::vector<char> nonfinite(o.reps, 0);
  parallel_for(o.reps, o.workers, [&](std::size_t r) {
    Rng rng = make_rng(o.seed, {r});
    std::normal_distribution<double> n01;
    auto grad_hat = [&](double x) {
      double v = f.dg(x);
      if (err_scale > 0.0) v += err_scale * (e.bias(x) + (e.tau > 0.0 ? e.tau * e.draw_noise(rng) : 0.0));
      return v;
    };
    double log_ratio = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < o.n; ++i) {
      const double x = f.sample(rng);
      const double gx = grad_hat(x);
      const double y = x + lambda * n01(rng) + 0.5 * l2 * gx;
      const double gy = grad_hat(y);
      const double fwd = y - x - 0.5 * l2 * gx, rev = x - y - 0.5 * l2 * gy;
      log_ratio += f.g(y) - f.g(x) + (fwd * fwd - rev * rev) / (2.0 * l2);
      sq += (y - x) * (y - x);
    }
    const double W = 0.5 * o.sigma2 + sd * n01(rng);
    const double V = -0.5 * o.sigma2 + sd * n01(rng);
    log_ratio += V - W;
    if (!std::isfinite(log_ratio) && !(log_ratio == kNegInf)) {
      nonfinite[r] = 1;
      acc[r] = 0.0;
    } else {
      acc[r] = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
    }
    jump[r] = acc[r] * sq / jump_scale;
  });

  LimitSimulationResult res;
  res.lambda = lambda;
  double s = 0, ss = 0, sj = 0;
  for (std::size_t r = 0; r < o.reps; ++r) {
    s += acc[r];
    ss += acc[r] * acc[r];
    sj += jump[r];
    res.nonfinite_rejections += nonfinite[r];
  }
  const double R = static_cast<double>(o.reps);
  res.acceptance = s / R;
  res.acceptance_se = std::sqrt(std::max(ss / R - res.acceptance * res.acceptance, 0.0) / R);
  res.scaled_esjd = sj / R;
  return res;
}

}  // namespace pmala::theory
