#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace pmala {

enum class TransformKind {
  identity,  ///< theta = x
  log,       ///< theta = exp(x), theta > 0
  atanh,     ///< theta = tanh(x), |theta| < 1
};

/// Componentwise bijection between a constrained parameter vector theta and
/// the unconstrained vector x on which every MCMC kernel operates.
class ParameterTransform {
 public:
  ParameterTransform() = default;
  explicit ParameterTransform(std::vector<TransformKind> kinds) : kinds_(std::move(kinds)) {}

  std::size_t size() const { return kinds_.size(); }
  TransformKind kind(std::size_t i) const { return kinds_.at(i); }

  /// Throws std::domain_error for values on or outside the constrained boundary.
  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& theta) const {
    check_size(theta.size());
    Eigen::VectorXd x(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double t = theta[i];
      if (!std::isfinite(t)) throw std::domain_error("non-finite parameter at index " + std::to_string(i));
      switch (kinds_[i]) {
        case TransformKind::identity: x[i] = t; break;
        case TransformKind::log:
          if (!(t > 0.0)) throw std::domain_error("log transform needs a positive value at index " + std::to_string(i));
          x[i] = std::log(t);
          break;
        case TransformKind::atanh:
          if (!(std::abs(t) < 1.0)) throw std::domain_error("atanh transform needs |value| < 1 at index " + std::to_string(i));
          x[i] = std::atanh(t);
          break;
      }
    }
    return x;
  }

  Eigen::VectorXd to_constrained(const Eigen::VectorXd& x) const {
    check_size(x.size());
    Eigen::VectorXd theta(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      switch (kinds_[i]) {
        case TransformKind::identity: theta[i] = x[i]; break;
        case TransformKind::log: theta[i] = std::exp(x[i]); break;
        case TransformKind::atanh: theta[i] = std::tanh(x[i]); break;
      }
    }
    return theta;
  }

  /// Diagonal of d theta / d x.
  Eigen::VectorXd jacobian_diagonal(const Eigen::VectorXd& x) const {
    check_size(x.size());
    Eigen::VectorXd d(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      switch (kinds_[i]) {
        case TransformKind::identity: d[i] = 1.0; break;
        case TransformKind::log: d[i] = std::exp(x[i]); break;
        case TransformKind::atanh: {
          const double t = std::tanh(x[i]);
          d[i] = 1.0 - t * t;
          break;
        }
      }
    }
    return d;
  }

  /// log |det d theta / d x|; finite on all of R^n.
  double log_jacobian(const Eigen::VectorXd& x) const {
    check_size(x.size());
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      switch (kinds_[i]) {
        case TransformKind::identity: break;
        case TransformKind::log: s += x[i]; break;
        case TransformKind::atanh: {
          // log sech^2(x) = 2 (log 2 - |x| - log1p(e^{-2|x|}))
          const double a = std::abs(x[i]);
          s += 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
          break;
        }
      }
    }
    return s;
  }

  Eigen::VectorXd grad_log_jacobian(const Eigen::VectorXd& x) const {
    check_size(x.size());
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      switch (kinds_[i]) {
        case TransformKind::identity: g[i] = 0.0; break;
        case TransformKind::log: g[i] = 1.0; break;
        case TransformKind::atanh: g[i] = -2.0 * std::tanh(x[i]); break;
      }
    }
    return g;
  }

 private:
  void check_size(Eigen::Index n) const {
    if (static_cast<std::size_t>(n) != kinds_.size())
      throw std::invalid_argument("parameter vector has length " + std::to_string(n) + ", transform expects " +
                                  std::to_string(kinds_.size()));
  }

  std::vector<TransformKind> kinds_;
};

}  // namespace pmala
