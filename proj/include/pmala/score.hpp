#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "pmala/model.hpp"

namespace pmala {

/// Per-particle means of the Rao-Blackwellized kernel approximation to the
/// path score. Column i holds particle i (n_params x N).
struct ScoreRecursionState {
  Eigen::MatrixXd means;
  double zeta = 0.95;

  std::size_t n_particles() const { return static_cast<std::size_t>(means.cols()); }
};

inline constexpr double kDefaultShrinkage = 0.95;

namespace detail {

inline void check_shrinkage(double zeta) {
  if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("shrinkage zeta must lie in (0, 1]");
}

inline void check_finite_column(const Eigen::MatrixXd& m, Eigen::Index i) {
  if (!m.col(i).allFinite())
    throw std::runtime_error("non-finite score increment for particle " + std::to_string(i));
}

}  // namespace detail

/// m_1^(i) = grad log g(z_1 | s_1^(i)) + grad log mu(s_1^(i)).
template <StateSpaceModel M>
ScoreRecursionState init_score(const M& model, const typename M::Params& p, std::span<const typename M::State> states,
                               double z1, double zeta = kDefaultShrinkage) {
  detail::check_shrinkage(zeta);
  ScoreRecursionState st;
  st.zeta = zeta;
  st.means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(model.n_params()), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto col = st.means.col(static_cast<Eigen::Index>(i));
    model.add_grad_log_observation(p, z1, states[i], col);
    model.add_grad_log_initial(p, states[i], col);
    detail::check_finite_column(st.means, static_cast<Eigen::Index>(i));
  }
  return st;
}

/// m_t^(i) = zeta m_{t-1}^(k_i) + (1 - zeta) sum_j w_{t-1}^(j) m_{t-1}^(j)
///           + grad log g(z_t | s_t^(i)) + grad log f(s_t^(i) | s_{t-1}^(k_i)).
/// With zeta = 1 this accumulates the score along each ancestral path.
template <StateSpaceModel M>
ScoreRecursionState update_score(const ScoreRecursionState& prev, std::span<const double> prev_weights,
                                 std::span<const typename M::State> prev_states, std::span<const std::size_t> ancestors,
                                 std::span<const typename M::State> states, const M& model,
                                 const typename M::Params& p, double z) {
  const auto n = prev.means.rows();
  const Eigen::Map<const Eigen::VectorXd> w(prev_weights.data(), static_cast<Eigen::Index>(prev_weights.size()));
  // shared shrinkage target, computed once per step
  const Eigen::VectorXd shrink_mean = (1.0 - prev.zeta) * (prev.means * w);

  ScoreRecursionState next;
  next.zeta = prev.zeta;
  next.means.resize(n, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(ancestors[i]);
    auto col = next.means.col(static_cast<Eigen::Index>(i));
    col = prev.zeta * prev.means.col(k) + shrink_mean;
    model.add_grad_log_observation(p, z, states[i], col);
    model.add_grad_log_transition(p, states[i], prev_states[ancestors[i]], col);
    detail::check_finite_column(next.means, static_cast<Eigen::Index>(i));
  }
  return next;
}

/// Weighted mean of the per-particle means.
inline Eigen::VectorXd final_score(const ScoreRecursionState& st, std::span<const double> weights) {
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return st.means * w;
}

}  // namespace pmala
