#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pmala/math.hpp"
#include "pmala/model.hpp"
#include "pmala/rng.hpp"
#include "pmala/transform.hpp"

namespace pmala {

/// z_t = alpha + beta s_t + tau nu_t,  s_t = mu + phi s_{t-1} + sigma eta_t.
/// Vector order everywhere: (alpha, beta, tau, mu, phi, sigma).
struct LgssParams {
  double alpha = 0.0;
  double beta = 1.0;
  double tau = 1.0;
  double mu = 0.0;
  double phi = 0.0;
  double sigma = 1.0;

  void validate() const {
    if (!(std::abs(phi) < 1.0)) throw std::domain_error("LGSS requires |phi| < 1");
    if (!(tau > 0.0)) throw std::domain_error("LGSS requires tau > 0");
    if (!(sigma > 0.0)) throw std::domain_error("LGSS requires sigma > 0");
  }

  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd v(6);
    v << alpha, beta, tau, mu, phi, sigma;
    return v;
  }

  static LgssParams from_vector(const Eigen::VectorXd& v) {
    if (v.size() != 6) throw std::invalid_argument("LGSS parameter vector must have 6 entries");
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }

  double stationary_mean() const { return mu / (1.0 - phi); }
  double stationary_var() const { return sigma * sigma / (1.0 - phi * phi); }
};

inline ParameterTransform lgss_transform() {
  using K = TransformKind;
  return ParameterTransform({K::identity, K::identity, K::log, K::identity, K::atanh, K::log});
}

/// Prior on the constrained parameters:
///   (alpha, beta) | tau ~ N((a_mean, b_mean), tau^2 diag(a_var, b_var))
///   tau^2 ~ InvGamma(tau2_shape, tau2_scale)
///   mu ~ N(mu_mean, mu_var)
///   (phi + 1)/2 ~ Beta(phi_a, phi_b)
///   sigma^2 ~ InvGamma(sigma2_shape, sigma2_scale)
struct LgssPrior {
  double alpha_mean = 0.3, alpha_var = 0.25;
  double beta_mean = 1.2, beta_var = 0.5;
  double tau2_shape = 1.0, tau2_scale = 7.0 / 20.0;
  double mu_mean = 0.15, mu_var = 0.5;
  double phi_a = 20.0, phi_b = 5.0;
  double sigma2_shape = 2.0, sigma2_scale = 1.0 / 40.0;

  /// Six log-densities, each normalized over its own unconstrained
  /// coordinate (alpha and beta conditionally on tau). Their sum is the
  /// unconstrained log prior, Jacobian included.
  std::array<double, 6> factor_log_densities(const Eigen::VectorXd& x) const {
    const double alpha = x[0], beta = x[1], log_tau = x[2], mu = x[3], phi_u = x[4], log_sigma = x[5];
    const double tau2 = std::exp(2.0 * log_tau);
    std::array<double, 6> f{};
    f[0] = normal_logpdf(alpha, alpha_mean, alpha_var * tau2);
    f[1] = normal_logpdf(beta, beta_mean, beta_var * tau2);
    // density of u = log tau: p_{tau^2}(e^{2u}) * 2 e^{2u}
    f[2] = log_inv_gamma_of_log(2.0 * log_tau, tau2_shape, tau2_scale) + std::log(2.0) + 2.0 * log_tau;
    f[3] = normal_logpdf(mu, mu_mean, mu_var);
    // density of v = atanh(phi): Beta((phi+1)/2) * (1/2) * sech^2(v)
    {
      const double a = std::abs(phi_u);
      const double log_sech2 = 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
      // (phi+1)/2 = e^{v}/(e^{v}+e^{-v}) = logistic(2v); log u and log(1-u) stably
      const double log_u = -softplus(-2.0 * phi_u);
      const double log_1mu = -softplus(2.0 * phi_u);
      f[4] = (phi_a - 1.0) * log_u + (phi_b - 1.0) * log_1mu - log_beta_fn(phi_a, phi_b) - std::numbers::ln2 + log_sech2;
    }
    f[5] = log_inv_gamma_of_log(2.0 * log_sigma, sigma2_shape, sigma2_scale) + std::log(2.0) + 2.0 * log_sigma;
    return f;
  }

  double log_density(const Eigen::VectorXd& x) const {
    const auto f = factor_log_densities(x);
    double s = 0.0;
    for (double v : f) s += v;
    return std::isnan(s) ? kNegInf : s;
  }

  /// Log prior density of the constrained vector theta (density w.r.t. theta).
  double log_density_constrained(const Eigen::VectorXd& theta) const {
    const auto x = lgss_transform().to_unconstrained(theta);
    return log_density(x) - lgss_transform().log_jacobian(x);
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
    const double alpha = x[0], beta = x[1], log_tau = x[2], mu = x[3], phi_u = x[4], log_sigma = x[5];
    const double tau2 = std::exp(2.0 * log_tau);
    const double da = alpha - alpha_mean, db = beta - beta_mean;
    Eigen::VectorXd g(6);
    g[0] = -da / (alpha_var * tau2);
    g[1] = -db / (beta_var * tau2);
    // d/du of the two conditional normals (-log tau - d^2/(2 c tau^2)) each
    g[2] = -2.0 + da * da / (alpha_var * tau2) + db * db / (beta_var * tau2);
    // InvGamma in v = e^{2u}: d/du = 2 v d/dv, d/dv = -(a+1)/v + b/v^2; plus the 2u Jacobian term
    g[2] += 2.0 * (-(tau2_shape + 1.0) + tau2_scale / tau2) + 2.0;
    g[3] = -(mu - mu_mean) / mu_var;
    {
      // u = logistic(2v): d log u/dv = 2(1-u), d log(1-u)/dv = -2u, d log sech^2 / dv = -2 tanh v
      const double u = logistic(2.0 * phi_u);
      g[4] = (phi_a - 1.0) * 2.0 * (1.0 - u) - (phi_b - 1.0) * 2.0 * u - 2.0 * std::tanh(phi_u);
    }
    const double sigma2 = std::exp(2.0 * log_sigma);
    g[5] = 2.0 * (-(sigma2_shape + 1.0) + sigma2_scale / sigma2) + 2.0;
    return g;
  }

  /// InvGamma log density at v = e^{log_v}; stays -inf rather than NaN when v underflows.
  static double log_inv_gamma_of_log(double log_v, double shape, double scale) {
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * log_v - scale * std::exp(-log_v);
  }
  static double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }
};

/// Linear Gaussian state-space model over unconstrained
/// x = (alpha, beta, log tau, mu, atanh phi, log sigma).
class LgssModel {
 public:
  using State = double;

  struct Params {
    LgssParams v;
    double dtau = 1.0, dphi = 1.0, dsigma = 1.0;  // d theta / d x for the transformed entries
    double m0 = 0.0, v0 = 1.0;                    // stationary (initial) mean and variance
    ScalarGaussian init, trans, obs;
    // fully adapted proposal: z_t | s_{t-1} and s_t | s_{t-1}, z_t
    ScalarGaussian pred, post;
  };

  LgssModel() = default;
  explicit LgssModel(LgssPrior prior) : prior_(prior) {}

  std::size_t n_params() const { return 6; }
  const ParameterTransform& transform() const { return transform_; }
  const LgssPrior& prior() const { return prior_; }

  Params params(const Eigen::VectorXd& x) const {
    Params p;
    p.v = {x[0], x[1], std::exp(x[2]), x[3], std::tanh(x[4]), std::exp(x[5])};
    p.dtau = p.v.tau;
    p.dphi = 1.0 - p.v.phi * p.v.phi;
    p.dsigma = p.v.sigma;
    p.m0 = p.v.stationary_mean();
    p.v0 = p.v.stationary_var();
    const double s2 = p.v.sigma * p.v.sigma, t2 = p.v.tau * p.v.tau;
    p.init = ScalarGaussian(p.v0);
    p.trans = ScalarGaussian(s2);
    p.obs = ScalarGaussian(t2);
    p.pred = ScalarGaussian(p.v.beta * p.v.beta * s2 + t2);
    p.post = ScalarGaussian(1.0 / (1.0 / s2 + p.v.beta * p.v.beta / t2));
    return p;
  }

  /// False when rounding pushed a transformed value onto the boundary
  /// (e.g. tanh(x) == 1 for very large x).
  static bool admissible(const Params& p) {
    return std::abs(p.v.phi) < 1.0 && p.v.tau > 0.0 && p.v.sigma > 0.0 && std::isfinite(p.v0) && std::isfinite(p.v.tau) &&
           std::isfinite(p.v.sigma);
  }

  Eigen::VectorXd to_unconstrained(const LgssParams& v) const {
    v.validate();
    return transform_.to_unconstrained(v.to_vector());
  }
  LgssParams to_constrained(const Eigen::VectorXd& x) const {
    return LgssParams::from_vector(transform_.to_constrained(x));
  }

  State sample_initial(const Params& p, Rng& rng) const {
    std::normal_distribution<double> n01;
    return p.m0 + std::sqrt(p.v0) * n01(rng);
  }
  State sample_transition(const Params& p, State prev, Rng& rng) const {
    std::normal_distribution<double> n01;
    return p.v.mu + p.v.phi * prev + p.v.sigma * n01(rng);
  }

  double log_initial(const Params& p, State s) const { return p.init(s, p.m0); }
  double log_transition(const Params& p, State s, State prev) const { return p.trans(s, p.v.mu + p.v.phi * prev); }
  double log_observation(const Params& p, double z, State s) const { return p.obs(z, p.v.alpha + p.v.beta * s); }

  void add_grad_log_initial(const Params& p, State s, Eigen::Ref<Eigen::VectorXd> out) const {
    const double phi = p.v.phi, sigma = p.v.sigma, one_m = 1.0 - phi, one_m2 = 1.0 - phi * phi;
    const double d = s - p.m0;
    const double dl_dm = d / p.v0;
    const double dl_dv = -0.5 / p.v0 + 0.5 * d * d / (p.v0 * p.v0);
    out[3] += dl_dm / one_m;
    const double dphi = dl_dm * p.v.mu / (one_m * one_m) + dl_dv * 2.0 * phi * sigma * sigma / (one_m2 * one_m2);
    out[4] += dphi * p.dphi;
    out[5] += dl_dv * 2.0 * sigma / one_m2 * p.dsigma;
  }

  void add_grad_log_transition(const Params& p, State s, State prev, Eigen::Ref<Eigen::VectorXd> out) const {
    const double s2 = p.v.sigma * p.v.sigma;
    const double e = s - p.v.mu - p.v.phi * prev;
    out[3] += e / s2;
    out[4] += e * prev / s2 * p.dphi;
    out[5] += -1.0 + e * e / s2;
  }

  void add_grad_log_observation(const Params& p, double z, State s, Eigen::Ref<Eigen::VectorXd> out) const {
    const double t2 = p.v.tau * p.v.tau;
    const double r = z - p.v.alpha - p.v.beta * s;
    out[0] += r / t2;
    out[1] += r * s / t2;
    out[2] += -1.0 + r * r / t2;
  }

  double log_prior(const Eigen::VectorXd& x) const { return prior_.log_density(x); }
  Eigen::VectorXd grad_log_prior(const Eigen::VectorXd& x) const { return prior_.grad(x); }

 private:
  LgssPrior prior_{};
  ParameterTransform transform_ = lgss_transform();
};

static_assert(StateSpaceModel<LgssModel>);

struct LgssSimulation {
  std::vector<double> states;  ///< s_1..s_T
  ObservationSeries observations;
};

/// s_0 is drawn from the stationary law, then T transitions and observations.
inline LgssSimulation lgss_simulate(const LgssParams& params, std::size_t T, Rng& rng) {
  params.validate();
  if (T < 1) throw std::invalid_argument("lgss_simulate requires T >= 1");
  std::normal_distribution<double> n01;
  double s = params.stationary_mean() + std::sqrt(params.stationary_var()) * n01(rng);
  std::vector<double> states(T), z(T);
  for (std::size_t t = 0; t < T; ++t) {
    s = params.mu + params.phi * s + params.sigma * n01(rng);
    states[t] = s;
    z[t] = params.alpha + params.beta * s + params.tau * n01(rng);
  }
  return {std::move(states), ObservationSeries(std::move(z))};
}

}  // namespace pmala
