#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "pmala/math.hpp"
#include "pmala/model.hpp"
#include "pmala/rng.hpp"

namespace pmala::testing {

/// Random walk s_t = s_{t-1} + N(0,1), s_1 ~ N(0,1), observed through an
/// indicator likelihood: g(z | s) = 1 when s < z, 0 otherwise. No density
/// depends on the single parameter, so every score term is zero.
struct ThresholdModel {
  using State = double;
  struct Params {};

  std::size_t n_params() const { return 1; }
  Params params(const Eigen::VectorXd&) const { return {}; }
  State sample_initial(const Params&, Rng& rng) const { return std::normal_distribution<double>()(rng); }
  State sample_transition(const Params&, State prev, Rng& rng) const {
    return prev + std::normal_distribution<double>()(rng);
  }
  double log_initial(const Params&, State s) const { return normal_logpdf(s, 0.0, 1.0); }
  double log_transition(const Params&, State s, State prev) const { return normal_logpdf(s, prev, 1.0); }
  double log_observation(const Params&, double z, State s) const { return s < z ? 0.0 : kNegInf; }
  void add_grad_log_initial(const Params&, State, Eigen::Ref<Eigen::VectorXd>) const {}
  void add_grad_log_transition(const Params&, State, State, Eigen::Ref<Eigen::VectorXd>) const {}
  void add_grad_log_observation(const Params&, double, State, Eigen::Ref<Eigen::VectorXd>) const {}
  double log_prior(const Eigen::VectorXd& x) const { return normal_logpdf(x[0], 0.0, 1.0); }
  Eigen::VectorXd grad_log_prior(const Eigen::VectorXd& x) const { return -x; }
};

static_assert(StateSpaceModel<ThresholdModel>);

}  // namespace pmala::testing
