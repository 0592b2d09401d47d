#pragma once

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pmala/math.hpp"
#include "pmala/rng.hpp"
#include "pmala/targets.hpp"

namespace pmala {

enum class KernelKind { random_walk, langevin, idealized_langevin };

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::random_walk: return "random-walk";
    case KernelKind::langevin: return "langevin";
    case KernelKind::idealized_langevin: return "idealized-langevin";
  }
  return "?";
}

inline KernelKind kernel_kind_from_string(std::string_view s) {
  if (s == "random-walk") return KernelKind::random_walk;
  if (s == "langevin") return KernelKind::langevin;
  if (s == "idealized-langevin") return KernelKind::idealized_langevin;
  throw std::invalid_argument("unknown kernel kind '" + std::string(s) + "'");
}

inline bool uses_gradient(KernelKind k) { return k != KernelKind::random_walk; }

inline constexpr double kRandomWalkConstant = 2.562;
inline constexpr double kLangevinConstant = 1.125;

/// lambda^2 = gamma^2 c^2 n^{-p}: (c, p) = (2.562, 1) for the random walk,
/// (1.125, 1/3) for the Langevin kernels.
inline double step_size_squared(KernelKind kind, double gamma, std::size_t n) {
  const double dn = static_cast<double>(n);
  if (kind == KernelKind::random_walk) return gamma * gamma * kRandomWalkConstant * kRandomWalkConstant / dn;
  return gamma * gamma * kLangevinConstant * kLangevinConstant * std::pow(dn, -1.0 / 3.0);
}

struct KernelConfig {
  KernelKind kind = KernelKind::langevin;
  double gamma = 1.0;
  Eigen::MatrixXd preconditioner;  ///< V-hat, symmetric positive definite
};

/// Chain state with its frozen estimates.
struct ChainState {
  Eigen::VectorXd x;
  double log_post = kNegInf;
  Eigen::VectorXd grad;
  std::size_t n_particles = 0;
  bool degenerate = true;

  static ChainState from(Eigen::VectorXd x, const TargetEvaluation& ev) {
    return {std::move(x), ev.degenerate ? kNegInf : ev.log_post, ev.grad, ev.n_particles, ev.degenerate || !std::isfinite(ev.log_post)};
  }
};

struct Proposal {
  Eigen::VectorXd y;
  double log_q_forward = 0.0;  ///< log q(y | x)
};

/// Gaussian proposal y = x + (lambda^2/2) V g + lambda L Z (drift omitted
/// for the random walk), with V = L L^T.
class Kernel {
 public:
  Kernel(KernelConfig config, std::size_t dimension) : config_(std::move(config)), n_(dimension) {
    if (!(config_.gamma > 0.0)) throw std::invalid_argument("kernel scaling gamma must be positive");
    if (config_.preconditioner.size() == 0) config_.preconditioner = Eigen::MatrixXd::Identity(n_, n_);
    const auto& V = config_.preconditioner;
    if (V.rows() != static_cast<Eigen::Index>(n_) || V.cols() != static_cast<Eigen::Index>(n_))
      throw std::invalid_argument("preconditioner has the wrong shape");
    if (!V.isApprox(V.transpose(), 1e-10)) throw std::invalid_argument("preconditioner must be symmetric");
    llt_.compute(V);
    if (llt_.info() != Eigen::Success) throw std::invalid_argument("preconditioner is not positive definite");
    L_ = llt_.matrixL();
    log_det_L_ = L_.diagonal().array().log().sum();
    lambda2_ = step_size_squared(config_.kind, config_.gamma, n_);
  }

  Kernel(KernelConfig config, std::size_t dimension, double lambda2) : Kernel(std::move(config), dimension) {
    if (!(lambda2 >= 0.0)) throw std::invalid_argument("lambda^2 must be non-negative");
    lambda2_ = lambda2;
  }

  const KernelConfig& config() const { return config_; }
  double lambda2() const { return lambda2_; }
  std::size_t dimension() const { return n_; }

  Eigen::VectorXd mean(const Eigen::VectorXd& x, const Eigen::VectorXd& grad) const {
    if (!uses_gradient(config_.kind)) return x;
    return x + 0.5 * lambda2_ * (config_.preconditioner * grad);
  }

  /// Proposal from an explicit standard normal vector z.
  Proposal propose_with(const ChainState& s, const Eigen::VectorXd& z) const {
    if (uses_gradient(config_.kind) && (s.grad.size() != static_cast<Eigen::Index>(n_) || !s.grad.allFinite()))
      throw std::invalid_argument("Langevin proposal requires a finite gradient estimate");
    Proposal p;
    p.y = mean(s.x, s.grad) + std::sqrt(lambda2_) * (L_ * z);
    p.log_q_forward = log_q(p.y, s.x, s.grad);
    return p;
  }

  Proposal propose(const ChainState& s, Rng& rng) const {
    std::normal_distribution<double> n01;
    Eigen::VectorXd z(n_);
    for (auto& v : z) v = n01(rng);
    return propose_with(s, z);
  }

  /// log q(to | from) for the Gaussian with mean(from, grad_from) and covariance lambda^2 V.
  double log_q(const Eigen::VectorXd& to, const Eigen::VectorXd& from, const Eigen::VectorXd& grad_from) const {
    const double dn = static_cast<double>(n_);
    if (lambda2_ == 0.0) return (to - mean(from, grad_from)).isZero(0.0) ? 0.0 : kNegInf;
    const Eigen::VectorXd r = llt_.matrixL().solve(to - mean(from, grad_from));
    return -0.5 * r.squaredNorm() / lambda2_ - 0.5 * dn * (kLog2Pi + std::log(lambda2_)) - log_det_L_;
  }

 private:
  KernelConfig config_;
  std::size_t n_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd L_;
  double log_det_L_ = 0.0;
  double lambda2_ = 0.0;
};

/// log pi-hat(y) - log pi-hat(x) + log q(x|y) - log q(y|x). The reverse
/// density uses the gradient estimate carried by `proposed`, i.e. from the
/// same filter run that produced its log posterior.
inline double acceptance_log_ratio(const ChainState& current, const ChainState& proposed, double log_q_forward,
                                   double log_q_reverse) {
  if (proposed.degenerate || !std::isfinite(proposed.log_post)) return kNegInf;
  return proposed.log_post - current.log_post + log_q_reverse - log_q_forward;
}

/// Full accept/reject decision against a uniform draw.
inline bool mh_accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  if (log_ratio == kNegInf || std::isnan(log_ratio)) return false;
  std::uniform_real_distribution<double> u01;
  return std::log(u01(rng)) < log_ratio;
}

struct ChainTrace {
  Eigen::MatrixXd states;            ///< J x n, row j is the state after iteration j
  std::vector<double> log_post;      ///< J
  std::vector<bool> accepted;        ///< J
  std::vector<double> proposal_sq_jump;  ///< ||y - x||^2 of each proposal
  double wall_seconds = 0.0;         ///< sampling phase only
  std::size_t burn_in = 0;

  std::size_t size() const { return log_post.size(); }
  double acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    std::size_t a = 0;
    for (bool b : accepted) a += b;
    return static_cast<double>(a) / static_cast<double>(accepted.size());
  }
  /// Rows after burn-in.
  Eigen::MatrixXd kept_states() const {
    const auto b = static_cast<Eigen::Index>(std::min(burn_in, size()));
    return states.bottomRows(states.rows() - b);
  }
  double kept_acceptance_rate() const {
    if (accepted.size() <= burn_in) return 0.0;
    std::size_t a = 0;
    for (std::size_t j = burn_in; j < accepted.size(); ++j) a += accepted[j];
    return static_cast<double>(a) / static_cast<double>(accepted.size() - burn_in);
  }
};

inline constexpr int kMaxInitAttempts = 100;

/// Evaluate the starting point, re-running the estimator up to 100 times
/// when it degenerates.
template <PosteriorTarget T>
ChainState initialize_chain(const T& target, const Eigen::VectorXd& x0, Rng& rng, bool need_gradient) {
  for (int attempt = 0; attempt < kMaxInitAttempts; ++attempt) {
    auto s = ChainState::from(x0, target.evaluate(x0, rng));
    if (!s.degenerate && (!need_gradient || (s.grad.size() > 0 && s.grad.allFinite()))) return s;
  }
  throw std::runtime_error("chain initialization failed: estimator degenerate at the initial state after " +
                           std::to_string(kMaxInitAttempts) + " attempts");
}

/// Pseudo-marginal Metropolis-Hastings. The current state's estimates are
/// only replaced on acceptance.
template <PosteriorTarget T>
ChainTrace run_chain(const T& target, const Kernel& kernel, const Eigen::VectorXd& x0, std::size_t iterations,
                     std::size_t burn_in, Rng& rng) {
  if (iterations < 1) throw std::invalid_argument("run_chain requires at least one iteration");
  if (kernel.dimension() != target.dimension()) throw std::invalid_argument("kernel and target dimensions differ");
  const bool need_grad = uses_gradient(kernel.config().kind);
  const auto n = static_cast<Eigen::Index>(target.dimension());

  ChainTrace trace;
  trace.burn_in = burn_in;
  trace.states.resize(static_cast<Eigen::Index>(iterations), n);
  trace.log_post.reserve(iterations);
  trace.accepted.reserve(iterations);
  trace.proposal_sq_jump.reserve(iterations);

  const auto t0 = std::chrono::steady_clock::now();
  ChainState current = initialize_chain(target, x0, rng, need_grad);
  for (std::size_t j = 0; j < iterations; ++j) {
    const auto prop = kernel.propose(current, rng);
    const auto proposed = ChainState::from(prop.y, target.evaluate(prop.y, rng));
    double log_ratio = kNegInf;
    if (!proposed.degenerate && (!need_grad || (proposed.grad.size() == n && proposed.grad.allFinite()))) {
      const double log_q_reverse = kernel.log_q(current.x, proposed.x, proposed.grad);
      log_ratio = acceptance_log_ratio(current, proposed, prop.log_q_forward, log_q_reverse);
    }
    const bool accept = mh_accept(log_ratio, rng);
    trace.proposal_sq_jump.push_back((prop.y - current.x).squaredNorm());
    if (accept) current = proposed;
    trace.states.row(static_cast<Eigen::Index>(j)) = current.x.transpose();
    trace.log_post.push_back(current.log_post);
    trace.accepted.push_back(accept);
  }
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return trace;
}

/// Sample covariance of the post-burn-in states with a small ridge
/// (1e-8 * trace / n) so the result is positive definite.
inline Eigen::MatrixXd pilot_covariance(const Eigen::MatrixXd& states) {
  const auto J = states.rows(), n = states.cols();
  if (J < 10 * n) throw std::invalid_argument("pilot_covariance needs at least 10 n states");
  const Eigen::RowVectorXd mean = states.colwise().mean();
  const Eigen::MatrixXd centered = states.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(J - 1);
  const double tr = cov.trace();
  if (!(tr > 0.0) || !std::isfinite(tr)) throw std::runtime_error("pilot_covariance: chain did not move (zero covariance)");
  cov.diagonal().array() += 1e-8 * tr / static_cast<double>(n);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::runtime_error("pilot_covariance: covariance is not positive definite");
  return cov;
}

inline Eigen::MatrixXd pilot_covariance(const ChainTrace& trace) { return pilot_covariance(trace.kept_states()); }

}  // namespace pmala
