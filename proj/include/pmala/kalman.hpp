#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "pmala/lgss.hpp"
#include "pmala/math.hpp"
#include "pmala/model.hpp"

namespace pmala {

struct KalmanFilterState {
  double mean = 0.0;      ///< filtered state mean
  double variance = 0.0;  ///< filtered state variance
  double log_likelihood = 0.0;
};

struct KalmanResult {
  KalmanFilterState final_state;
  /// Gradient w.r.t. the unconstrained vector (alpha, beta, log tau, mu, atanh phi, log sigma).
  /// Empty unless requested.
  Eigen::VectorXd score;
};

namespace detail {

inline void require_finite(double v, std::size_t t, const char* what) {
  if (!std::isfinite(v))
    throw std::overflow_error(std::string("Kalman filter produced non-finite ") + what + " at t=" + std::to_string(t + 1));
}

/// Predict/update recursion with optional forward sensitivities of the
/// predicted mean/variance w.r.t. the six constrained parameters.
inline KalmanResult kalman_run(const LgssParams& prm, const ObservationSeries& z, bool with_score) {
  prm.validate();
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  enum { A = 0, B = 1, TAU = 2, MU = 3, PHI = 4, SIG = 5 };
  const double al = prm.alpha, be = prm.beta, ta = prm.tau, mu = prm.mu, ph = prm.phi, sg = prm.sigma;
  const double one_m = 1.0 - ph, one_m2 = 1.0 - ph * ph;

  double m = mu / one_m;      // predicted mean
  double P = sg * sg / one_m2;  // predicted variance
  Vec6 dm = Vec6::Zero(), dP = Vec6::Zero(), dll = Vec6::Zero();
  if (with_score) {
    dm[MU] = 1.0 / one_m;
    dm[PHI] = mu / (one_m * one_m);
    dP[PHI] = 2.0 * ph * sg * sg / (one_m2 * one_m2);
    dP[SIG] = 2.0 * sg / one_m2;
  }

  KalmanResult out;
  double ll = 0.0, mf = 0.0, Pf = 0.0;
  for (std::size_t t = 0; t < z.size(); ++t) {
    const double y = al + be * m;
    const double S = be * be * P + ta * ta;
    const double e = z[t] - y;
    ll += -0.5 * (kLog2Pi + std::log(S) + e * e / S);
    const double K = be * P / S;
    mf = m + K * e;
    Pf = P * (1.0 - K * be);
    require_finite(ll, t, "log-likelihood");
    require_finite(mf, t, "mean");

    if (with_score) {
      Vec6 dy = be * dm;
      dy[A] += 1.0;
      dy[B] += m;
      Vec6 dS = be * be * dP;
      dS[B] += 2.0 * be * P;
      dS[TAU] += 2.0 * ta;
      const Vec6 de = -dy;
      dll += -0.5 * (dS / S + 2.0 * e * de / S - e * e * dS / (S * S));
      Vec6 dK = be * dP / S - be * P * dS / (S * S);
      dK[B] += P / S;
      const Vec6 dmf = dm + e * dK + K * de;
      Vec6 dPf = dP - (be * P) * dK - (K * be) * dP;
      dPf[B] -= K * P;
      // next prediction
      dm = ph * dmf;
      dm[MU] += 1.0;
      dm[PHI] += mf;
      dP = ph * ph * dPf;
      dP[PHI] += 2.0 * ph * Pf;
      dP[SIG] += 2.0 * sg;
    }
    m = mu + ph * mf;
    P = ph * ph * Pf + sg * sg;
  }
  out.final_state = {mf, Pf, ll};
  if (with_score) {
    // chain rule to (alpha, beta, log tau, mu, atanh phi, log sigma)
    out.score = dll;
    out.score[TAU] *= ta;
    out.score[PHI] *= one_m2;
    out.score[SIG] *= sg;
    for (Eigen::Index i = 0; i < 6; ++i) require_finite(out.score[i], z.size() - 1, "score");
  }
  return out;
}

}  // namespace detail

/// Exact log p(z_{1:T} | params).
inline double kalman_loglik(const LgssParams& params, const ObservationSeries& z) {
  return detail::kalman_run(params, z, false).final_state.log_likelihood;
}

/// Exact gradient of log p(z_{1:T} | x) w.r.t. the unconstrained parameters,
/// by forward sensitivity recursion.
inline Eigen::VectorXd kalman_score(const LgssParams& params, const ObservationSeries& z) {
  return detail::kalman_run(params, z, true).score;
}

inline KalmanResult kalman_filter(const LgssParams& params, const ObservationSeries& z, bool with_score = true) {
  return detail::kalman_run(params, z, with_score);
}

}  // namespace pmala
