#pragma once

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pmala/math.hpp"
#include "pmala/model.hpp"
#include "pmala/rng.hpp"
#include "pmala/transform.hpp"

namespace pmala {

/// Two AR(1) experts mixed by a logistic gate on (s_{t-1}, s_{t-1} - s_{t-2}),
/// observed with Gaussian noise:
///   z_t = s_t + tau nu_t
///   s_t = psi_J + phi_J s_{t-1} + sigma_J eta_t
///   pr(J_t = 1 | s_{t-1}, s_{t-2}) = logistic(xi1 + xi2 s_{t-1} + xi3 (s_{t-1} - s_{t-2}))
/// Vector order: (tau, psi1, psi2, phi1, phi2, sigma1, sigma2, xi1, xi2, xi3).
struct MixtureExpertsParams {
  double tau = 0.1;
  double psi1 = 0.0, psi2 = 1.0;
  double phi1 = 0.5, phi2 = 0.5;
  double sigma1 = 0.5, sigma2 = 0.5;
  double xi1 = 0.0, xi2 = 0.0, xi3 = 0.0;

  /// Identifiability: the mean of expert one is below that of expert two.
  bool identifiable() const { return psi1 * (1.0 - phi1) < psi2 * (1.0 - phi2); }

  void validate() const {
    if (!(tau > 0.0) || !(sigma1 > 0.0) || !(sigma2 > 0.0))
      throw std::domain_error("mixture model requires tau, sigma1, sigma2 > 0");
    if (!identifiable()) throw std::domain_error("mixture model requires psi1(1-phi1) < psi2(1-phi2)");
  }

  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd v(10);
    v << tau, psi1, psi2, phi1, phi2, sigma1, sigma2, xi1, xi2, xi3;
    return v;
  }
  static MixtureExpertsParams from_vector(const Eigen::VectorXd& v) {
    if (v.size() != 10) throw std::invalid_argument("mixture parameter vector must have 10 entries");
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
  }

  /// pr(J_t = 1 | s_{t-1}, s_{t-2})
  double gate(double s_prev, double s_prev2) const { return logistic(xi1 + xi2 * s_prev + xi3 * (s_prev - s_prev2)); }
};

inline ParameterTransform mixture_transform() {
  using K = TransformKind;
  return ParameterTransform({K::log, K::identity, K::identity, K::identity, K::identity, K::log, K::log, K::identity,
                             K::identity, K::identity});
}

/// Independent Gaussians on the unconstrained scale, truncated to the
/// identifiable region (log prior -inf outside). The truncation constant is
/// not included. Defaults: mean 0, sd 5 for every coordinate.
struct MixturePrior {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(10);
  Eigen::VectorXd sd = Eigen::VectorXd::Constant(10, 5.0);

  double log_density(const Eigen::VectorXd& x) const {
    const auto theta = mixture_transform().to_constrained(x);
    if (!MixtureExpertsParams::from_vector(theta).identifiable()) return kNegInf;
    double s = 0.0;
    for (Eigen::Index i = 0; i < 10; ++i) s += normal_logpdf(x[i], mean[i], sd[i] * sd[i]);
    return s;
  }
  Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
    return (mean - x).cwiseQuotient(sd.cwiseProduct(sd));
  }
};

/// Latent state carries (s_t, s_{t-1}) so the gate has both lags. The chain
/// starts from fixed lags s_0 = s_{-1} = initial_level; s_1 then follows
/// the mixture transition.
class MixtureModel {
 public:
  using State = std::array<double, 2>;

  struct Params {
    MixtureExpertsParams v;
    double dtau = 1.0, dsigma1 = 1.0, dsigma2 = 1.0;
  };

  MixtureModel() = default;
  explicit MixtureModel(MixturePrior prior, double initial_level = 0.0)
      : prior_(std::move(prior)), initial_level_(initial_level) {}

  std::size_t n_params() const { return 10; }
  const ParameterTransform& transform() const { return transform_; }
  const MixturePrior& prior() const { return prior_; }
  double initial_level() const { return initial_level_; }
  State initial_lags() const { return {initial_level_, initial_level_}; }

  Params params(const Eigen::VectorXd& x) const {
    Params p;
    p.v = MixtureExpertsParams::from_vector(transform_.to_constrained(x));
    p.dtau = p.v.tau;
    p.dsigma1 = p.v.sigma1;
    p.dsigma2 = p.v.sigma2;
    return p;
  }
  static bool admissible(const Params& p) {
    return p.v.tau > 0.0 && p.v.sigma1 > 0.0 && p.v.sigma2 > 0.0 && std::isfinite(p.v.tau) && std::isfinite(p.v.sigma1) &&
           std::isfinite(p.v.sigma2);
  }

  Eigen::VectorXd to_unconstrained(const MixtureExpertsParams& v) const {
    v.validate();
    return transform_.to_unconstrained(v.to_vector());
  }

  State sample_initial(const Params& p, Rng& rng) const { return sample_transition(p, initial_lags(), rng); }
  State sample_transition(const Params& p, const State& prev, Rng& rng) const {
    std::uniform_real_distribution<double> u01;
    std::normal_distribution<double> n01;
    const double p1 = p.v.gate(prev[0], prev[1]);
    const bool first = u01(rng) < p1;
    const double psi = first ? p.v.psi1 : p.v.psi2;
    const double phi = first ? p.v.phi1 : p.v.phi2;
    const double sig = first ? p.v.sigma1 : p.v.sigma2;
    return {psi + phi * prev[0] + sig * n01(rng), prev[0]};
  }

  double log_initial(const Params& p, const State& s) const { return log_transition(p, s, initial_lags()); }

  /// Density of the new level s[0] given (prev[0], prev[1]); s[1] is a copy of prev[0].
  double log_transition(const Params& p, const State& s, const State& prev) const {
    const auto c = components(p, s[0], prev);
    return log_add_exp(c.log_joint[0], c.log_joint[1]);
  }
  double log_observation(const Params& p, double z, const State& s) const {
    return normal_logpdf(z, s[0], p.v.tau * p.v.tau);
  }

  void add_grad_log_initial(const Params& p, const State& s, Eigen::Ref<Eigen::VectorXd> out) const {
    add_grad_log_transition(p, s, initial_lags(), out);
  }

  void add_grad_log_transition(const Params& p, const State& s, const State& prev, Eigen::Ref<Eigen::VectorXd> out) const {
    const auto c = components(p, s[0], prev);
    const double lse = log_add_exp(c.log_joint[0], c.log_joint[1]);
    const double r1 = std::exp(c.log_joint[0] - lse);
    const double r2 = 1.0 - r1;
    const double sig2_1 = p.v.sigma1 * p.v.sigma1, sig2_2 = p.v.sigma2 * p.v.sigma2;
    out[1] += r1 * c.resid[0] / sig2_1;
    out[2] += r2 * c.resid[1] / sig2_2;
    out[3] += r1 * c.resid[0] * prev[0] / sig2_1;
    out[4] += r2 * c.resid[1] * prev[0] / sig2_2;
    out[5] += r1 * (-1.0 + c.resid[0] * c.resid[0] / sig2_1);
    out[6] += r2 * (-1.0 + c.resid[1] * c.resid[1] / sig2_2);
    const double deta = r1 - c.p1;  // d log f / d gate-logit
    out[7] += deta;
    out[8] += deta * prev[0];
    out[9] += deta * (prev[0] - prev[1]);
  }

  void add_grad_log_observation(const Params& p, double z, const State& s, Eigen::Ref<Eigen::VectorXd> out) const {
    const double r = z - s[0];
    out[0] += -1.0 + r * r / (p.v.tau * p.v.tau);
  }

  double log_prior(const Eigen::VectorXd& x) const { return prior_.log_density(x); }
  Eigen::VectorXd grad_log_prior(const Eigen::VectorXd& x) const { return prior_.grad(x); }

 private:
  struct Components {
    std::array<double, 2> log_joint;  // log p_j + log N_j
    std::array<double, 2> resid;
    double p1;
  };
  Components components(const Params& p, double s, const State& prev) const {
    const double eta = p.v.xi1 + p.v.xi2 * prev[0] + p.v.xi3 * (prev[0] - prev[1]);
    Components c;
    c.p1 = logistic(eta);
    c.resid = {s - p.v.psi1 - p.v.phi1 * prev[0], s - p.v.psi2 - p.v.phi2 * prev[0]};
    c.log_joint[0] = -softplus(-eta) + normal_logpdf(c.resid[0], 0.0, p.v.sigma1 * p.v.sigma1);
    c.log_joint[1] = -softplus(eta) + normal_logpdf(c.resid[1], 0.0, p.v.sigma2 * p.v.sigma2);
    return c;
  }

  MixturePrior prior_{};
  double initial_level_ = 0.0;
  ParameterTransform transform_ = mixture_transform();
};

static_assert(StateSpaceModel<MixtureModel>);

struct MixtureSimulation {
  std::vector<double> states;  ///< s_1..s_T
  std::vector<int> regimes;    ///< J_1..J_T in {1, 2}
  std::vector<double> gate_probabilities;  ///< pr(J_t = 1 | lags) used at each step
  ObservationSeries observations;
};

inline MixtureSimulation mixture_simulate(const MixtureExpertsParams& params, std::size_t T, Rng& rng,
                                          double initial_level = 0.0) {
  params.validate();
  if (T < 2) throw std::invalid_argument("mixture_simulate requires T >= 2");
  std::uniform_real_distribution<double> u01;
  std::normal_distribution<double> n01;
  MixtureSimulation out;
  out.states.reserve(T);
  out.regimes.reserve(T);
  std::vector<double> z;
  z.reserve(T);
  double prev = initial_level, prev2 = initial_level;
  for (std::size_t t = 0; t < T; ++t) {
    const double p1 = params.gate(prev, prev2);
    const bool first = u01(rng) < p1;
    const double s = first ? params.psi1 + params.phi1 * prev + params.sigma1 * n01(rng)
                           : params.psi2 + params.phi2 * prev + params.sigma2 * n01(rng);
    out.states.push_back(s);
    out.regimes.push_back(first ? 1 : 2);
    out.gate_probabilities.push_back(p1);
    z.push_back(s + params.tau * n01(rng));
    prev2 = prev;
    prev = s;
  }
  out.observations = ObservationSeries(std::move(z));
  return out;
}

}  // namespace pmala
