// Acceptance checks. Usage: pmala_acceptance [k ...]; no arguments runs all.
// Prints one "criterion k: PASS|FAIL ..." line per check; exit status 1 if any fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pmala/pmala.hpp"

namespace {

using namespace pmala;
namespace th = pmala::theory;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [miss]");
  }
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::string within(double value, double target, double tol) {
  return fmt(value) + " vs " + fmt(target) + " +/- " + fmt(tol, 3);
}

ExperimentConfig desk_config() {
  return parse_config(read_json(std::filesystem::path(PMALA_SOURCE_DIR) / "configs" / "lgss_desk.json"));
}

struct DeskProblem {
  ExperimentConfig config = desk_config();
  LgssModel model;
  ObservationSeries data = load_data(config);
  Eigen::VectorXd x_true = reference_point(config);
  LgssParams p_true = lgss_params_from_map(config.data.simulate->true_params);
};

const DeskProblem& desk() {
  static const DeskProblem d;
  return d;
}

/// Exact-likelihood random-walk pilot; gives the posterior covariance estimate.
Eigen::MatrixXd kalman_pilot(const ObservationSeries& z, const Eigen::VectorXd& x0) {
  const KalmanTarget target(LgssModel{}, z, false);
  PilotOptions po;
  po.iterations = 200000;
  po.stages = 4;
  po.seed = 1301;
  return run_pilot(target, x0, po).covariance;
}

/// Mean and its standard error using the chain's effective sample size.
struct ChainMoment {
  double value = 0.0, se = 0.0;
};

ChainMoment chain_mean(const Eigen::VectorXd& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  const auto m = sample_moments(v);
  return {m.mean, std::sqrt(m.variance / std::max(ess(v).ess, 1.0))};
}

ChainMoment chain_variance(const Eigen::VectorXd& x) {
  const double m = x.mean();
  const Eigen::VectorXd sq = (x.array() - m).square().matrix();
  return chain_mean(sq);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  const auto r = th::optimal_params(1.0);
  o.check(std::abs(r.ell - 1.125) <= 0.001, "ell " + within(r.ell, 1.125, 0.001));
  o.check(std::abs(r.sigma2 - 3.038) <= 0.005, "sigma2 " + within(r.sigma2, 3.038, 0.005));
  o.check(std::abs(r.alpha - 0.1547) <= 0.0005, "alpha " + within(r.alpha, 0.1547, 0.0005));
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto m = th::maximin_acceptance(std::sqrt(3.038));
  o.check(m.alpha >= 0.10 && m.alpha <= 0.12, "maximin alpha " + fmt(m.alpha) + " in [0.10, 0.12]");
  double worst = 1.0, at = 0.0;
  for (int i = 0; i <= 25; ++i) {
    const double sigma = 0.5 + 0.1 * i;
    const double w = th::maximin_acceptance(sigma).worst_efficiency;
    if (w < worst) worst = w, at = sigma;
  }
  o.check(worst >= 0.90, "min worst-case efficiency over sigma in [0.5, 3] " + fmt(worst) + " at sigma " + fmt(at, 3) +
                             " (need >= 0.90)");
  return o;
}

Outcome criterion3() {
  Outcome o;
  th::GradientErrorModel e;
  e.b = [](double x) { return -x; };
  e.db = [](double) { return -1.0; };
  const auto r = th::roughness_from_density(th::standard_gaussian_density(), e);
  o.check(std::abs(r.K - 0.25) <= 1e-6, "K " + within(r.K, 0.25, 1e-6));
  o.check(std::abs(r.K_star2 - 1.0) <= 1e-6, "K*^2 " + within(r.K_star2, 1.0, 1e-6));
  o.check(std::abs(r.K_star_star + 0.25) <= 1e-6, "K** " + within(r.K_star_star, -0.25, 1e-6));
  return o;
}

Outcome criterion4() {
  Outcome o;
  th::RegimeSpec r;
  r.kappa = th::kCriticalKappa;
  r.roughness = {0.25, 1.0, -0.25};
  r.sigma2 = 0.0;
  const double a2 = th::limiting_acceptance(r, 2.0);
  o.check(a2 == 1.0, "ell=2 acceptance " + fmt(a2, 17) + " == 1");
  const double expect = 2.0 * norm_cdf(-0.5 * std::sqrt(1.0 / 16.0 - 0.5 + 1.0));
  const double a1 = th::limiting_acceptance(r, 1.0), b1 = th::limiting_acceptance_via_moment(r, 1.0);
  o.check(std::abs(a1 - expect) <= 1e-12, "closed form " + fmt(a1, 15) + " vs " + fmt(expect, 15));
  o.check(std::abs(b1 - expect) <= 1e-12, "moment form " + fmt(b1, 15) + " vs " + fmt(expect, 15));
  return o;
}

Outcome criterion5() {
  Outcome o;
  th::LimitSimulationOptions s;
  s.n = 800;
  s.reps = 20000;
  s.ell = 1.786;
  s.sigma2 = 3.038;
  s.seed = 5001;
  const auto r = th::simulate_limit(s, th::standard_gaussian_density());
  o.check(std::abs(r.acceptance - 0.1547) <= 0.015,
          "acceptance " + within(r.acceptance, 0.1547, 0.015) + " (MC se " + fmt(r.acceptance_se, 3) + ")");
  return o;
}

Outcome criterion6() {
  Outcome o;
  th::GradientErrorModel e;
  e.kappa = 0.0;
  e.tau = 1.0;
  const auto rough = th::roughness_from_density(th::standard_gaussian_density(), e);
  std::uint64_t seed = 6001;
  for (double ell : {0.5, 1.0, 2.0})
    for (double s2 : {0.0, 3.0}) {
      th::LimitSimulationOptions s;
      s.n = 500;
      s.reps = 20000;
      s.ell = ell;
      s.sigma2 = s2;
      s.seed = seed++;
      const auto r = th::simulate_limit(s, th::standard_gaussian_density(), e);
      th::RegimeSpec spec;
      spec.kappa = 0.0;
      spec.roughness = rough;
      spec.sigma2 = s2;
      const double a = th::limiting_acceptance(spec, ell);
      o.check(std::abs(r.acceptance - a) <= 0.02, "ell=" + fmt(ell, 2) + " s2=" + fmt(s2, 2) + ": " +
                                                      within(r.acceptance, a, 0.02));
    }
  return o;
}

Outcome criterion7() {
  Outcome o;
  const auto& d = desk();
  const auto z = d.data.head(50);
  const double exact = kalman_loglik(d.p_true, z);
  for (std::size_t N : {5u, 20u}) {
    std::vector<double> ratio;
    FilterOptions f;
    f.n_particles = N;
    for (std::size_t r = 0; r < 2000; ++r) {
      Rng rng = make_rng(7001, {N, r});
      ratio.push_back(std::exp(run_apf(d.model, d.x_true, z, FullyAdaptedLgss{}, rng, f).log_likelihood - exact));
    }
    const auto m = sample_moments(ratio);
    const double se = std::sqrt(m.variance / static_cast<double>(ratio.size()));
    o.check(std::abs(m.mean - 1.0) <= 3.0 * se, "N=" + std::to_string(N) + " mean ratio " + within(m.mean, 1.0, 3.0 * se));
  }
  return o;
}

Outcome criterion8() {
  Outcome o;
  const auto& d = desk();
  const double exact = kalman_loglik(d.p_true, d.data);
  const std::vector<Eigen::VectorXd> pts{d.x_true};
  {
    const auto r = noise_study(d.model, d.data, FullyAdaptedLgss{}, pts, {20}, 2000, 8001);
    std::vector<double> e = r.rows.at(0).samples;
    for (auto& v : e) v -= exact;
    const auto m = sample_moments(e);
    // influence function of mean + variance / 2
    double s = 0, ss = 0;
    for (double v : e) {
      const double dv = v - m.mean, inf = dv + 0.5 * (dv * dv - m.variance);
      s += inf;
      ss += inf * inf;
    }
    const double R = static_cast<double>(e.size());
    const double se = std::sqrt((ss / R - (s / R) * (s / R)) / R);
    o.check(std::abs(m.mean + 0.5 * m.variance) <= 3.0 * se,
            "N=20 mean error " + fmt(m.mean) + " vs -var/2 " + fmt(-0.5 * m.variance) + " (3 se " + fmt(3.0 * se, 3) + ")");
  }
  const auto r = noise_study(d.model, d.data, FullyAdaptedLgss{}, pts, {5, 10, 20, 40, 80}, 500, 8002);
  o.check(std::abs(r.slope + 1.0) <= 0.15, "variance slope " + within(r.slope, -1.0, 0.15));
  return o;
}

/// Largest deviation between the shrinkage recursion at zeta = 1 and the
/// explicit ancestral path sums, relative to the path size.
double path_sum_deviation(const LgssModel& m, const Eigen::VectorXd& x, const ObservationSeries& z, std::size_t N,
                          std::uint64_t seed) {
  const auto p = m.params(x);
  Rng rng(seed);
  FilterOptions f;
  f.n_particles = N;
  f.with_score = true;
  f.zeta = 1.0;
  f.keep_history = true;
  const auto out = run_apf(m, x, z, FullyAdaptedLgss{}, rng, f);
  const std::size_t T = z.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<std::size_t> lineage(T);
    lineage[T - 1] = i;
    for (std::size_t t = T - 1; t > 0; --t) lineage[t - 1] = out.history[t].ancestors[lineage[t]];
    Eigen::VectorXd path = Eigen::VectorXd::Zero(6);
    m.add_grad_log_initial(p, out.history[0].states[lineage[0]], path);
    m.add_grad_log_observation(p, z[0], out.history[0].states[lineage[0]], path);
    for (std::size_t t = 1; t < T; ++t) {
      const double s = out.history[t].states[lineage[t]], prev = out.history[t - 1].states[lineage[t - 1]];
      m.add_grad_log_transition(p, s, prev, path);
      m.add_grad_log_observation(p, z[t], s, path);
    }
    const Eigen::VectorXd rec = out.final_cloud.score->means.col(static_cast<Eigen::Index>(i));
    worst = std::max(worst, (rec - path).cwiseAbs().maxCoeff() / (1.0 + path.cwiseAbs().maxCoeff()));
  }
  return worst;
}

Outcome criterion9() {
  Outcome o;
  const auto& d = desk();
  double worst = 0.0;
  for (std::size_t N = 1; N <= 5; ++N)
    for (std::size_t T = 1; T <= 10; ++T) worst = std::max(worst, path_sum_deviation(d.model, d.x_true, d.data.head(T), N, 9000 + 10 * N + T));
  o.check(worst <= 1e-12, "zeta=1 max relative deviation from path sums " + fmt(worst, 3));

  const auto z = d.data.head(100);
  const auto exact = kalman_score(d.p_true, z);
  FilterOptions f;
  f.n_particles = 500;
  f.with_score = true;
  f.zeta = 0.95;
  const int reps = 200;
  Eigen::MatrixXd draws(reps, 6);
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_rng(9001, {static_cast<std::uint64_t>(r)});
    draws.row(r) = run_apf(d.model, d.x_true, z, FullyAdaptedLgss{}, rng, f).score->transpose();
  }
  const Eigen::VectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd c = draws.rowwise() - mean.transpose();
  const auto& names = parameter_names(ModelKind::lgss);
  for (int i = 0; i < 6; ++i) {
    const double se = std::sqrt(c.col(i).squaredNorm() / (reps - 1) / reps);
    const double zscore = (mean[i] - exact[i]) / se;
    o.check(std::abs(zscore) <= 3.0, "zeta=0.95 " + names[static_cast<std::size_t>(i)] + " mean " + fmt(mean[i]) +
                                         " vs " + fmt(exact[i]) + " (" + fmt(zscore, 3) + " se)");
  }
  return o;
}

Outcome criterion10() {
  Outcome o;
  const auto& d = desk();
  const auto& names = parameter_names(ModelKind::lgss);
  for (auto [zeta, target] : {std::pair{1.0, 2.0}, std::pair{0.95, 1.0}}) {
    const auto table = score_variance_study(d.model, d.x_true, d.data, FullyAdaptedLgss{}, 100, zeta, {25, 50, 100, 200},
                                            200, 10001);
    const auto slopes = table.slopes();
    for (int i = 0; i < 6; ++i)
      o.check(std::abs(slopes[i] - target) <= 0.3,
              "zeta=" + fmt(zeta, 3) + " " + names[static_cast<std::size_t>(i)] + " slope " + within(slopes[i], target, 0.3));
  }
  return o;
}

bool enumerable_detailed_balance() {
  const std::array<double, 3> pi{1.0 / 6, 2.0 / 6, 3.0 / 6};
  const std::array<std::array<double, 2>, 3> w{{{0.5, 1.5}, {0.2, 1.8}, {0.9, 1.1}}};
  auto joint = [&](int x, int u) { return pi[x] * 0.5 * w[x][u]; };
  auto move = [&](int x, int u, int y, int v) {
    if (x == y) return 0.0;
    ChainState cur{Eigen::VectorXd::Constant(1, x), std::log(pi[x] * w[x][u]), {}, 0, false};
    ChainState prop{Eigen::VectorXd::Constant(1, y), std::log(pi[y] * w[y][v]), {}, 0, false};
    return 0.5 * 0.5 * std::min(1.0, std::exp(acceptance_log_ratio(cur, prop, std::log(0.5), std::log(0.5))));
  };
  double worst = 0.0;
  for (int x = 0; x < 3; ++x)
    for (int u = 0; u < 2; ++u)
      for (int y = 0; y < 3; ++y)
        for (int v = 0; v < 2; ++v) worst = std::max(worst, std::abs(joint(x, u) * move(x, u, y, v) - joint(y, v) * move(y, v, x, u)));
  return worst <= 1e-15;
}

Outcome criterion11() {
  Outcome o;
  o.check(enumerable_detailed_balance(), "enumerable toy detailed balance");
  const auto& d = desk();
  const auto V = kalman_pilot(d.data, d.x_true);

  // exactness holds for any step size; gamma = 0.5 mixes better on this curved posterior
  const KalmanTarget exact(d.model, d.data, true);
  Rng rng(11001);
  const auto mala = run_chain(exact, Kernel({KernelKind::langevin, 0.5, V}, 6), d.x_true, 100000, 5000, rng);
  const KalmanTarget exact_value(d.model, d.data, false);
  Rng rng_ref(11002);
  const auto ref = run_chain(exact_value, Kernel({KernelKind::random_walk, 1.0, V}, 6), d.x_true, 1000000, 10000, rng_ref);

  const Eigen::MatrixXd a = mala.kept_states(), b = ref.kept_states();
  o.check(true, "MALA acceptance " + fmt(mala.kept_acceptance_rate(), 3) + ", reference acceptance " +
                    fmt(ref.kept_acceptance_rate(), 3));
  const auto& names = parameter_names(ModelKind::lgss);
  for (int i = 0; i < 6; ++i) {
    const auto ma = chain_mean(a.col(i)), mb = chain_mean(b.col(i));
    const double se_m = std::hypot(ma.se, mb.se);
    o.check(std::abs(ma.value - mb.value) <= 3.0 * se_m,
            names[static_cast<std::size_t>(i)] + " mean " + within(ma.value, mb.value, 3.0 * se_m));
    const auto va = chain_variance(a.col(i)), vb = chain_variance(b.col(i));
    const double se_v = std::hypot(va.se, vb.se);
    o.check(std::abs(va.value - vb.value) <= 3.0 * se_v,
            names[static_cast<std::size_t>(i)] + " var " + within(va.value, vb.value, 3.0 * se_v));
  }
  return o;
}

Outcome criterion12() {
  Outcome o;
  const auto& d = desk();
  const auto V = kalman_pilot(d.data, d.x_true);
  const KalmanTarget exact(d.model, d.data, true);
  FilterOptions f;
  f.n_particles = 20;
  f.with_score = true;
  const ParticleTarget noisy(d.model, d.data, FullyAdaptedLgss{}, f);
  const Kernel k({KernelKind::langevin, 1.0, V}, 6);
  const auto pts = posterior_points(KalmanTarget(d.model, d.data, false), d.x_true, V, 5, 5000, 12001);
  const auto deltas = regime_deltas(noisy, [&](const Eigen::VectorXd& x) { return exact.evaluate(x); }, k, pts, 200, 12002);
  const auto s = summarize(deltas);
  o.check(s.median_abs_b < 0.1 * s.median_abs_a,
          "median|dB| " + fmt(s.median_abs_b) + " < 0.1 median|dA| " + fmt(0.1 * s.median_abs_a));
  const double ratio = s.median_abs_c / s.median_abs_a;
  o.check(ratio >= 1.0 / 3.0 && ratio <= 3.0, "median|dC| / median|dA| " + fmt(ratio) + " in [1/3, 3] (dropped " +
                                                   std::to_string(deltas.dropped) + ")");
  return o;
}

Outcome desk_sweep(std::uint64_t seed) {
  Outcome o;
  auto c = desk_config();
  c.run.seed = seed;
  const auto& d = desk();
  const auto tmp = std::filesystem::temp_directory_path() / ("pmala_acceptance_sweep_" + std::to_string(seed));
  std::filesystem::create_directories(tmp);
  const auto V = run_config_pilot(c, d.data, {tmp, 1});
  std::filesystem::remove_all(tmp);

  SweepSpec s;
  s.kind = KernelKind::langevin;
  s.N = c.filter.N;
  s.gamma = c.kernel.gamma;
  s.iterations = c.run.iterations;
  s.burn_in = c.run.burn_in;
  s.zeta = c.filter.zeta;
  s.seed = c.run.seed;
  const auto cells = run_sweep(d.model, d.data, FullyAdaptedLgss{}, d.x_true, d.x_true, V, s);
  const SweepCell* best = nullptr;
  for (const auto& cell : cells) {
    std::cout << "  langevin N=" << cell.N << " gamma=" << cell.gamma << " accept=" << fmt(cell.accept, 3)
              << " sigma2=" << fmt(cell.sigma2, 3) << " min_ess/s=" << fmt(cell.min_ess_per_sec, 4)
              << (cell.error.empty() ? "" : " error: " + cell.error) << '\n';
    if (cell.error.empty() && (!best || cell.min_ess_per_sec > best->min_ess_per_sec)) best = &cell;
  }
  if (!best) {
    o.check(false, "every sweep cell failed");
    return o;
  }
  o.check(best->sigma2 >= 1.2 && best->sigma2 <= 3.8,
          "best cell N=" + std::to_string(best->N) + " gamma=" + fmt(best->gamma, 3) + ": sigma2 " + fmt(best->sigma2, 4) + " in [1.2, 3.8]");
  o.check(best->gamma >= 0.75 && best->gamma <= 1.75, "gamma " + fmt(best->gamma, 3) + " in [0.75, 1.75]");
  o.check(best->accept >= 0.10 && best->accept <= 0.25, "acceptance " + fmt(best->accept, 4) + " in [0.10, 0.25]");

  SweepSpec rw = s;
  rw.kind = KernelKind::random_walk;
  rw.N = {best->N};
  const auto rw_cells = run_sweep(d.model, d.data, FullyAdaptedLgss{}, d.x_true, d.x_true, V, rw);
  double rw_best = 0.0;
  for (const auto& cell : rw_cells) {
    std::cout << "  random-walk N=" << cell.N << " gamma=" << cell.gamma << " accept=" << fmt(cell.accept, 3)
              << " min_ess/s=" << fmt(cell.min_ess_per_sec, 4) << '\n';
    if (cell.error.empty()) rw_best = std::max(rw_best, cell.min_ess_per_sec);
  }
  o.check(best->min_ess_per_sec >= rw_best, "min-ESS/s at N=" + std::to_string(best->N) + ": langevin " +
                                                fmt(best->min_ess_per_sec, 4) + " >= random walk " + fmt(rw_best, 4));
  return o;
}

Outcome criterion13() {
  const std::uint64_t seed = desk_config().run.seed;
  auto first = desk_sweep(seed);
  if (first.pass) return first;
  // one rerun on a fresh seed before reporting failure
  auto second = desk_sweep(seed + 1);
  Outcome o;
  o.pass = second.pass;
  o.detail << "first run: " << first.detail.str() << " | rerun: " << second.detail.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion1}, {2, criterion2},   {3, criterion3},   {4, criterion4},   {5, criterion5},
      {6, criterion6}, {7, criterion7},   {8, criterion8},   {9, criterion9},   {10, criterion10},
      {11, criterion11}, {12, criterion12}, {13, criterion13}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (!criteria.count(k)) {
      std::cerr << "unknown criterion " << argv[i] << '\n';
      return 2;
    }
    selected.push_back(k);
  }
  if (selected.empty())
    for (const auto& [k, _] : criteria) selected.push_back(k);

  bool all = true;
  for (int k : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria.at(k)();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << k << ": " << (out.pass ? "PASS" : "FAIL") << " (" << fmt(secs, 3) << " s) "
              << out.detail.str() << std::endl;
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
