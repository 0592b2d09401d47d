#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pmala/rng.hpp"

namespace pmala {

/// Univariate observations z_1..z_T.
class ObservationSeries {
 public:
  ObservationSeries() = default;
  explicit ObservationSeries(std::vector<double> z) : z_(std::move(z)) {
    if (z_.empty()) throw std::invalid_argument("observation series must have T >= 1");
    for (std::size_t t = 0; t < z_.size(); ++t)
      if (!std::isfinite(z_[t])) throw std::invalid_argument("missing or non-finite observation at t=" + std::to_string(t + 1));
  }

  std::size_t size() const { return z_.size(); }
  double operator[](std::size_t t) const { return z_[t]; }
  std::span<const double> values() const { return z_; }
  /// Prefix z_1..z_T (T <= size()).
  ObservationSeries head(std::size_t T) const {
    return ObservationSeries(std::vector<double>(z_.begin(), z_.begin() + static_cast<std::ptrdiff_t>(T)));
  }

  bool operator==(const ObservationSeries&) const = default;

 private:
  std::vector<double> z_;
};

/// Behavioral contract for a state-space model. All gradients are with
/// respect to the unconstrained parameter vector x and are accumulated into
/// `out` so that callers can sum several terms without temporaries.
///
/// `Params` is the model's per-x cache (constrained values, transform
/// derivatives); it is built once per likelihood evaluation.
template <class M>
concept StateSpaceModel = requires(const M& m, const typename M::Params& p, const typename M::State& s,
                                   const Eigen::VectorXd& x, double z, Rng& rng, Eigen::Ref<Eigen::VectorXd> out) {
  typename M::State;
  typename M::Params;
  { m.n_params() } -> std::convertible_to<std::size_t>;
  { m.params(x) } -> std::same_as<typename M::Params>;
  { m.sample_initial(p, rng) } -> std::same_as<typename M::State>;
  { m.sample_transition(p, s, rng) } -> std::same_as<typename M::State>;
  { m.log_initial(p, s) } -> std::convertible_to<double>;
  { m.log_transition(p, s, s) } -> std::convertible_to<double>;
  { m.log_observation(p, z, s) } -> std::convertible_to<double>;
  m.add_grad_log_initial(p, s, out);
  m.add_grad_log_transition(p, s, s, out);
  m.add_grad_log_observation(p, z, s, out);
  { m.log_prior(x) } -> std::convertible_to<double>;
  { m.grad_log_prior(x) } -> std::same_as<Eigen::VectorXd>;
};

/// Central finite-difference gradient. Test-only fallback; models supply
/// analytic gradients for the hot loop.
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& x, double rel_step = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace pmala
