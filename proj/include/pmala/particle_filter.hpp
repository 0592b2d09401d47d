#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmala/math.hpp"
#include "pmala/model.hpp"
#include "pmala/rng.hpp"
#include "pmala/score.hpp"

namespace pmala {

/// Thrown when every unnormalized weight at some step is zero.
class DegenerateFilterError : public std::runtime_error {
 public:
  explicit DegenerateFilterError(std::size_t step)
      : std::runtime_error("particle filter degenerate: all weights zero at t=" + std::to_string(step)), step_(step) {}
  /// 1-based time index.
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

enum class ResamplingScheme { multinomial, stratified, systematic };

/// Draw `n_draws` indices with the given (unnormalized, non-negative)
/// probabilities. Multinomial draws come back in raw draw order.
inline std::vector<std::size_t> resample_indices(std::span<const double> probabilities, std::size_t n_draws, Rng& rng,
                                                 ResamplingScheme scheme = ResamplingScheme::multinomial) {
  if (probabilities.empty()) throw std::invalid_argument("resample_indices: empty probability vector");
  std::vector<double> cum(probabilities.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("resample_indices: invalid probability at index " + std::to_string(i));
    total += p;
    cum[i] = total;
  }
  if (!(total > 0.0)) throw std::invalid_argument("resample_indices: probabilities sum to zero");

  const std::size_t last = probabilities.size() - 1;
  auto locate = [&](double u) {
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    return std::min(static_cast<std::size_t>(it - cum.begin()), last);
  };

  std::vector<std::size_t> idx(n_draws);
  std::uniform_real_distribution<double> u01;
  switch (scheme) {
    case ResamplingScheme::multinomial:
      for (auto& k : idx) k = locate(u01(rng) * total);
      break;
    case ResamplingScheme::stratified:
      for (std::size_t j = 0; j < n_draws; ++j) idx[j] = locate((static_cast<double>(j) + u01(rng)) / n_draws * total);
      break;
    case ResamplingScheme::systematic: {
      const double u = u01(rng);
      for (std::size_t j = 0; j < n_draws; ++j) idx[j] = locate((static_cast<double>(j) + u) / n_draws * total);
      break;
    }
  }
  return idx;
}

template <class State>
struct ParticleCloud {
  std::vector<State> states;
  std::vector<double> weights;      ///< normalized, sum to 1
  std::vector<double> log_weights;  ///< unnormalized log weights of this step
  std::vector<double> log_weights_normalized;  ///< log of `weights`
  std::vector<std::size_t> ancestors;  ///< k_i (0-based); empty at t = 1
  std::optional<ScoreRecursionState> score;

  std::size_t size() const { return states.size(); }
};

/// Proposal adapter: look-ahead weights xi (from the normalized log
/// weights), state proposal q, and the weight increment log g + log f - log q.
template <class A, class M>
concept ProposalAdapter = StateSpaceModel<M> &&
    requires(const A& a, const M& m, const typename M::Params& p, std::span<const typename M::State> states,
             std::span<const double> log_weights, const typename M::State& s, double z, Rng& rng, std::span<double> out) {
      a.aux_log_weights(m, p, states, log_weights, z, out);
      { a.propose(m, p, s, z, rng) } -> std::same_as<typename M::State>;
      { a.log_proposal(m, p, s, s, z) } -> std::convertible_to<double>;
      { a.log_weight_increment(m, p, s, s, z) } -> std::convertible_to<double>;
    };

struct FilterOptions {
  std::size_t n_particles = 100;
  bool with_score = false;
  double zeta = kDefaultShrinkage;
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  bool keep_history = false;
};

template <class State>
struct FilterOutput {
  double log_likelihood = 0.0;               ///< sum_t log(C_t / N)
  std::optional<Eigen::VectorXd> score;      ///< set when FilterOptions::with_score
  ParticleCloud<State> final_cloud;
  std::vector<double> log_normalizers;       ///< log(C_t / N) per step
  std::vector<ParticleCloud<State>> history; ///< every step's cloud when keep_history
};

namespace detail {

/// Normalizes in place; returns log(C_t / N).
template <class State>
double normalize_weights(ParticleCloud<State>& cloud, std::size_t step) {
  for (std::size_t i = 0; i < cloud.log_weights.size(); ++i)
    if (std::isnan(cloud.log_weights[i]))
      throw std::runtime_error("particle filter: NaN weight at t=" + std::to_string(step) + ", particle " + std::to_string(i));
  const double lse = logsumexp(cloud.log_weights);
  if (lse == kNegInf) throw DegenerateFilterError(step);
  if (!std::isfinite(lse)) throw std::runtime_error("particle filter: infinite weight at t=" + std::to_string(step));
  const std::size_t n = cloud.log_weights.size();
  cloud.weights.resize(n);
  cloud.log_weights_normalized.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.log_weights_normalized[i] = cloud.log_weights[i] - lse;
    cloud.weights[i] = std::exp(cloud.log_weights_normalized[i]);
  }
  return lse - std::log(static_cast<double>(cloud.log_weights.size()));
}

}  // namespace detail

/// Auxiliary particle filter with multinomial resampling at every step and
/// an optionally fused score recursion.
template <StateSpaceModel M, class Adapter>
  requires ProposalAdapter<Adapter, M>
FilterOutput<typename M::State> run_apf(const M& model, const Eigen::VectorXd& x, const ObservationSeries& z,
                                        const Adapter& adapter, Rng& rng, const FilterOptions& opts = {}) {
  using State = typename M::State;
  const std::size_t N = opts.n_particles;
  if (N < 1) throw std::invalid_argument("run_apf requires N >= 1");
  if (static_cast<std::size_t>(x.size()) != model.n_params())
    throw std::invalid_argument("parameter vector length does not match model");
  if (opts.with_score) detail::check_shrinkage(opts.zeta);
  const auto p = model.params(x);

  FilterOutput<State> out;
  out.log_normalizers.reserve(z.size());

  // t = 1: sample from the initial density and weight by g
  ParticleCloud<State> cloud;
  cloud.states.resize(N);
  cloud.log_weights.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    cloud.states[i] = model.sample_initial(p, rng);
    cloud.log_weights[i] = model.log_observation(p, z[0], cloud.states[i]);
  }
  out.log_normalizers.push_back(detail::normalize_weights(cloud, 1));
  if (opts.with_score) cloud.score = init_score(model, p, std::span<const State>(cloud.states), z[0], opts.zeta);
  if (opts.keep_history) out.history.push_back(cloud);

  std::vector<double> aux(N);
  for (std::size_t t = 1; t < z.size(); ++t) {
    const double zt = z[t];
    adapter.aux_log_weights(model, p, std::span<const State>(cloud.states),
                            std::span<const double>(cloud.log_weights_normalized), zt, std::span<double>(aux));
    const double aux_lse = logsumexp(aux);
    if (!std::isfinite(aux_lse)) throw DegenerateFilterError(t + 1);
    std::vector<double> xi(N);
    for (std::size_t i = 0; i < N; ++i) xi[i] = std::exp(aux[i] - aux_lse);
    const auto ancestors = resample_indices(xi, N, rng, opts.resampling);

    ParticleCloud<State> next;
    next.states.resize(N);
    next.log_weights.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t k = ancestors[i];
      const State& prev = cloud.states[k];
      next.states[i] = adapter.propose(model, p, prev, zt, rng);
      next.log_weights[i] = cloud.log_weights_normalized[k] - (aux[k] - aux_lse) +
                            adapter.log_weight_increment(model, p, next.states[i], prev, zt);
    }
    out.log_normalizers.push_back(detail::normalize_weights(next, t + 1));
    if (opts.with_score)
      next.score = update_score(*cloud.score, std::span<const double>(cloud.weights), std::span<const State>(cloud.states),
                                std::span<const std::size_t>(ancestors), std::span<const State>(next.states), model, p, zt);
    next.ancestors = ancestors;
    cloud = std::move(next);
    if (opts.keep_history) out.history.push_back(cloud);
  }

  for (double v : out.log_normalizers) out.log_likelihood += v;
  if (opts.with_score) out.score = final_score(*cloud.score, std::span<const double>(cloud.weights));
  out.final_cloud = std::move(cloud);
  return out;
}

namespace detail {
inline void write_state(std::ostream& os, double s) { os << s; }
template <std::size_t K>
void write_state(std::ostream& os, const std::array<double, K>& s) {
  for (std::size_t j = 0; j < K; ++j) os << (j ? "," : "") << s[j];
}
inline void write_state_header(std::ostream& os, const double*) { os << "state"; }
template <std::size_t K>
void write_state_header(std::ostream& os, const std::array<double, K>*) {
  for (std::size_t j = 0; j < K; ++j) os << (j ? "," : "") << "state" << (j + 1);
}
}  // namespace detail

/// Debug dump of one cloud: "particle,ancestor,weight,state..." with
/// 1-based particle and ancestor indices (ancestor 0 at t = 1).
template <class State>
void write_cloud_csv(std::ostream& os, const ParticleCloud<State>& cloud) {
  os << "particle,ancestor,weight,";
  detail::write_state_header(os, static_cast<const State*>(nullptr));
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    os << (i + 1) << ',' << (cloud.ancestors.empty() ? 0 : cloud.ancestors[i] + 1) << ',' << cloud.weights[i] << ',';
    detail::write_state(os, cloud.states[i]);
    os << '\n';
  }
}

}  // namespace pmala
