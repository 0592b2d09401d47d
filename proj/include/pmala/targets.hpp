#pragma once

#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "pmala/kalman.hpp"
#include "pmala/lgss.hpp"
#include "pmala/math.hpp"
#include "pmala/model.hpp"
#include "pmala/particle_filter.hpp"
#include "pmala/rng.hpp"

namespace pmala {

/// One (possibly noisy) evaluation of the log posterior and its gradient at x.
struct TargetEvaluation {
  double log_post = kNegInf;   ///< log pi-hat(x), unconstrained prior + Jacobian included
  double log_lik = kNegInf;
  Eigen::VectorXd grad;        ///< gradient estimate; empty when not requested
  std::size_t n_particles = 0; ///< 0 for exact evaluations
  bool degenerate = true;      ///< filter collapsed or x outside the prior support

  bool ok() const { return !degenerate && std::isfinite(log_post); }
};

template <class T>
concept PosteriorTarget = requires(T& t, const Eigen::VectorXd& x, Rng& rng) {
  { t.dimension() } -> std::convertible_to<std::size_t>;
  { t.evaluate(x, rng) } -> std::same_as<TargetEvaluation>;
};

namespace detail {
template <class M>
bool admissible(const M& m, const Eigen::VectorXd& x) {
  if constexpr (requires { M::admissible(m.params(x)); })
    return M::admissible(m.params(x));
  else
    return true;
}
}  // namespace detail

/// Particle-filter posterior: unbiased likelihood estimate plus the O(N)
/// score estimate from the same filter run.
template <StateSpaceModel M, class Adapter>
  requires ProposalAdapter<Adapter, M>
class ParticleTarget {
 public:
  ParticleTarget(M model, ObservationSeries data, Adapter adapter, FilterOptions options)
      : model_(std::move(model)), data_(std::move(data)), adapter_(std::move(adapter)), options_(options) {}

  std::size_t dimension() const { return model_.n_params(); }
  const M& model() const { return model_; }
  const ObservationSeries& data() const { return data_; }
  const FilterOptions& options() const { return options_; }
  void set_particles(std::size_t n) { options_.n_particles = n; }

  TargetEvaluation evaluate(const Eigen::VectorXd& x, Rng& rng) const {
    TargetEvaluation ev;
    ev.n_particles = options_.n_particles;
    const double lp = model_.log_prior(x);
    if (!std::isfinite(lp) || !detail::admissible(model_, x)) return ev;
    try {
      const auto out = run_apf(model_, x, data_, adapter_, rng, options_);
      ev.log_lik = out.log_likelihood;
      ev.log_post = out.log_likelihood + lp;
      if (options_.with_score) ev.grad = *out.score + model_.grad_log_prior(x);
      ev.degenerate = !std::isfinite(ev.log_post);
    } catch (const DegenerateFilterError&) {
      ev.degenerate = true;
    }
    return ev;
  }

 private:
  M model_;
  ObservationSeries data_;
  Adapter adapter_;
  FilterOptions options_;
};

/// Exact LGSS posterior via the Kalman filter (no Monte Carlo noise).
class KalmanTarget {
 public:
  KalmanTarget(LgssModel model, ObservationSeries data, bool with_gradient = true)
      : model_(std::move(model)), data_(std::move(data)), with_gradient_(with_gradient) {}

  std::size_t dimension() const { return 6; }
  const LgssModel& model() const { return model_; }

  TargetEvaluation evaluate(const Eigen::VectorXd& x, Rng&) const { return evaluate(x); }

  TargetEvaluation evaluate(const Eigen::VectorXd& x) const {
    TargetEvaluation ev;
    const double lp = model_.log_prior(x);
    if (!std::isfinite(lp) || !detail::admissible(model_, x)) return ev;
    try {
      const auto r = kalman_filter(model_.to_constrained(x), data_, with_gradient_);
      ev.log_lik = r.final_state.log_likelihood;
      ev.log_post = ev.log_lik + lp;
      if (with_gradient_) ev.grad = r.score + model_.grad_log_prior(x);
      ev.degenerate = false;
    } catch (const std::overflow_error&) {
      ev.degenerate = true;
    }
    return ev;
  }

 private:
  LgssModel model_;
  ObservationSeries data_;
  bool with_gradient_;
};

/// Idealized particle Langevin target: noisy particle likelihood, exact
/// (Kalman) gradient.
template <class Adapter>
  requires ProposalAdapter<Adapter, LgssModel>
class IdealizedLgssTarget {
 public:
  IdealizedLgssTarget(LgssModel model, ObservationSeries data, Adapter adapter, FilterOptions options)
      : particle_(model, data, std::move(adapter), without_score(options)), exact_(std::move(model), std::move(data)) {}

  std::size_t dimension() const { return 6; }

  TargetEvaluation evaluate(const Eigen::VectorXd& x, Rng& rng) const {
    auto ev = particle_.evaluate(x, rng);
    if (!ev.ok()) return ev;
    const auto exact = exact_.evaluate(x);
    if (!exact.ok()) {
      ev.degenerate = true;
      return ev;
    }
    ev.grad = exact.grad;
    return ev;
  }

 private:
  static FilterOptions without_score(FilterOptions o) {
    o.with_score = false;
    return o;
  }
  ParticleTarget<LgssModel, Adapter> particle_;
  KalmanTarget exact_;
};

}  // namespace pmala
