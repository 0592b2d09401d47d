#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>

#include "pmala/lgss.hpp"
#include "pmala/math.hpp"
#include "pmala/mixture.hpp"
#include "pmala/model.hpp"
#include "pmala/particle_filter.hpp"

namespace pmala {

/// Bootstrap filter: xi = previous weights, q = f, so the weight increment
/// is g alone.
struct BootstrapAdapter {
  template <StateSpaceModel M>
  void aux_log_weights(const M&, const typename M::Params&, std::span<const typename M::State>,
                       std::span<const double> log_weights, double, std::span<double> out) const {
    std::copy(log_weights.begin(), log_weights.end(), out.begin());
  }
  template <StateSpaceModel M>
  typename M::State propose(const M& m, const typename M::Params& p, const typename M::State& prev, double,
                            Rng& rng) const {
    return m.sample_transition(p, prev, rng);
  }
  template <StateSpaceModel M>
  double log_proposal(const M& m, const typename M::Params& p, const typename M::State& s,
                      const typename M::State& prev, double) const {
    return m.log_transition(p, s, prev);
  }
  template <StateSpaceModel M>
  double log_weight_increment(const M& m, const typename M::Params& p, const typename M::State& s,
                              const typename M::State&, double z) const {
    return m.log_observation(p, z, s);
  }
};

class UnsupportedModelError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Fully adapted filter for the LGSS: q(s_t | s_{t-1}, z_t) is the exact
/// Gaussian conditional and xi is proportional to w p(z_t | s_{t-1}).
struct FullyAdaptedLgss {
  /// Mean of z_t | s_{t-1}.
  static double pred_mean(const LgssModel::Params& p, double prev) { return p.v.alpha + p.v.beta * (p.v.mu + p.v.phi * prev); }
  /// Mean of s_t | s_{t-1}, z_t.
  static double post_mean(const LgssModel::Params& p, double prev, double z) {
    const auto& v = p.v;
    return p.post.var * ((v.mu + v.phi * prev) * p.trans.inv_var + v.beta * (z - v.alpha) * p.obs.inv_var);
  }

  /// log p(z_t | s_{t-1})
  static double log_predictive(const LgssModel::Params& p, double prev, double z) { return p.pred(z, pred_mean(p, prev)); }

  void aux_log_weights(const LgssModel&, const LgssModel::Params& p, std::span<const double> states,
                       std::span<const double> log_weights, double z, std::span<double> out) const {
    for (std::size_t i = 0; i < states.size(); ++i) out[i] = log_weights[i] + log_predictive(p, states[i], z);
  }
  double propose(const LgssModel&, const LgssModel::Params& p, double prev, double z, Rng& rng) const {
    std::normal_distribution<double> n01;
    return post_mean(p, prev, z) + std::sqrt(p.post.var) * n01(rng);
  }
  double log_proposal(const LgssModel&, const LgssModel::Params& p, double s, double prev, double z) const {
    return p.post(s, post_mean(p, prev, z));
  }
  double log_weight_increment(const LgssModel& m, const LgssModel::Params& p, double s, double prev, double z) const {
    return m.log_observation(p, z, s) + m.log_transition(p, s, prev) - log_proposal(m, p, s, prev, z);
  }
};

/// Fully adapted filter for the mixture of experts: per-expert Gaussian
/// conjugacy mixed over J_t with the gate probabilities.
struct FullyAdaptedMixture {
  using State = MixtureModel::State;

  struct Conditional {
    std::array<double, 2> log_pred;  // log p_j + log N(z; psi_j + phi_j s, sigma_j^2 + tau^2)
    std::array<double, 2> post_mean, post_var;
    double log_predictive;           // log p(z_t | s_{t-1}, s_{t-2})
    std::array<double, 2> mix;       // posterior expert probabilities
  };

  static Conditional conditional(const MixtureModel::Params& p, const State& prev, double z) {
    const auto& v = p.v;
    const double eta = v.xi1 + v.xi2 * prev[0] + v.xi3 * (prev[0] - prev[1]);
    const std::array<double, 2> log_gate{-softplus(-eta), -softplus(eta)};
    const std::array<double, 2> psi{v.psi1, v.psi2}, phi{v.phi1, v.phi2}, sig{v.sigma1, v.sigma2};
    const double t2 = v.tau * v.tau;
    Conditional c;
    for (int j = 0; j < 2; ++j) {
      const double a = psi[j] + phi[j] * prev[0];
      const double s2 = sig[j] * sig[j];
      c.log_pred[j] = log_gate[j] + normal_logpdf(z, a, s2 + t2);
      c.post_var[j] = 1.0 / (1.0 / s2 + 1.0 / t2);
      c.post_mean[j] = c.post_var[j] * (a / s2 + z / t2);
    }
    c.log_predictive = log_add_exp(c.log_pred[0], c.log_pred[1]);
    c.mix = {std::exp(c.log_pred[0] - c.log_predictive), std::exp(c.log_pred[1] - c.log_predictive)};
    return c;
  }

  void aux_log_weights(const MixtureModel&, const MixtureModel::Params& p, std::span<const State> states,
                       std::span<const double> log_weights, double z, std::span<double> out) const {
    for (std::size_t i = 0; i < states.size(); ++i)
      out[i] = log_weights[i] + conditional(p, states[i], z).log_predictive;
  }
  State propose(const MixtureModel&, const MixtureModel::Params& p, const State& prev, double z, Rng& rng) const {
    const auto c = conditional(p, prev, z);
    std::uniform_real_distribution<double> u01;
    std::normal_distribution<double> n01;
    const int j = u01(rng) < c.mix[0] ? 0 : 1;
    return {c.post_mean[j] + std::sqrt(c.post_var[j]) * n01(rng), prev[0]};
  }
  double log_proposal(const MixtureModel&, const MixtureModel::Params& p, const State& s, const State& prev,
                      double z) const {
    const auto c = conditional(p, prev, z);
    return log_add_exp(std::log(c.mix[0]) + normal_logpdf(s[0], c.post_mean[0], c.post_var[0]),
                       std::log(c.mix[1]) + normal_logpdf(s[0], c.post_mean[1], c.post_var[1]));
  }
  double log_weight_increment(const MixtureModel& m, const MixtureModel::Params& p, const State& s, const State& prev,
                              double z) const {
    return m.log_observation(p, z, s) + m.log_transition(p, s, prev) - log_proposal(m, p, s, prev, z);
  }
};

inline FullyAdaptedLgss fully_adapted_adapter(const LgssModel&) { return {}; }
inline FullyAdaptedMixture fully_adapted_adapter(const MixtureModel&) { return {}; }
template <class M>
[[noreturn]] void fully_adapted_adapter(const M&) {
  throw UnsupportedModelError("no fully adapted proposal is available for this model");
}

inline BootstrapAdapter bootstrap_adapter() { return {}; }

static_assert(ProposalAdapter<BootstrapAdapter, LgssModel>);
static_assert(ProposalAdapter<BootstrapAdapter, MixtureModel>);
static_assert(ProposalAdapter<FullyAdaptedLgss, LgssModel>);
static_assert(ProposalAdapter<FullyAdaptedMixture, MixtureModel>);

}  // namespace pmala
