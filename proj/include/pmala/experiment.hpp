#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pmala/adapters.hpp"
#include "pmala/config.hpp"
#include "pmala/diagnostics.hpp"
#include "pmala/io.hpp"
#include "pmala/kalman.hpp"
#include "pmala/lgss.hpp"
#include "pmala/mcmc.hpp"
#include "pmala/mixture.hpp"
#include "pmala/parallel.hpp"
#include "pmala/targets.hpp"
#include "pmala/theory.hpp"

namespace pmala {

// ---------------------------------------------------------------------------
// Library-level drivers (no file output)

struct PilotOptions {
  std::size_t iterations = 20000;
  std::size_t stages = 3;
  double initial_scale = 0.01;  ///< first-stage preconditioner is initial_scale * I
  std::uint64_t seed = 0;
};

struct PilotResult {
  Eigen::MatrixXd covariance;
  Eigen::VectorXd last_state;
  double acceptance_rate = 0.0;  ///< final stage
};

/// Random-walk pilot in stages; each stage re-estimates the preconditioner
/// from the second half of the previous stage.
template <PosteriorTarget T>
PilotResult run_pilot(const T& target, const Eigen::VectorXd& x0, const PilotOptions& o) {
  const std::size_t n = target.dimension();
  if (o.stages < 1) throw std::invalid_argument("pilot needs at least one stage");
  const std::size_t per_stage = o.iterations / o.stages;
  if (per_stage < 20 * n) throw std::invalid_argument("pilot iterations too small for the number of stages");
  Eigen::MatrixXd V = o.initial_scale * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd x = x0;
  PilotResult res;
  for (std::size_t s = 0; s < o.stages; ++s) {
    Rng rng = make_rng(o.seed, {0x9170, s});
    const Kernel kernel({KernelKind::random_walk, 1.0, V}, n);
    const auto trace = run_chain(target, kernel, x, per_stage, per_stage / 2, rng);
    try {
      V = pilot_covariance(trace);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string("degenerate pilot run (") + e.what() +
                               "); increase kernel.pilot_iterations or choose a different initial point");
    }
    x = trace.states.row(trace.states.rows() - 1).transpose();
    res.acceptance_rate = trace.kept_acceptance_rate();
  }
  res.covariance = V;
  res.last_state = x;
  return res;
}

/// Variance of the log-likelihood estimate over repeated filter runs.
template <StateSpaceModel M, class Adapter>
  requires ProposalAdapter<Adapter, M>
double log_likelihood_variance(const M& model, const ObservationSeries& data, const Adapter& adapter,
                               const Eigen::VectorXd& x, std::size_t N, std::size_t runs, std::uint64_t seed) {
  std::vector<double> v;
  FilterOptions opts;
  opts.n_particles = N;
  for (std::size_t r = 0; r < runs; ++r) {
    Rng rng = make_rng(seed, {0x5162, N, r});
    try {
      v.push_back(run_apf(model, x, data, adapter, rng, opts).log_likelihood);
    } catch (const DegenerateFilterError&) {
    }
  }
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return sample_moments(v).variance;
}

struct SweepSpec {
  KernelKind kind = KernelKind::langevin;
  std::vector<std::size_t> N{20};
  std::vector<double> gamma{1.0};
  std::size_t chains = 1;
  std::size_t iterations = 20000;
  std::size_t burn_in = 2000;
  double zeta = kDefaultShrinkage;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t sigma2_runs = 100;
};

struct SweepCell {
  std::size_t N = 0;
  double gamma = 0.0;
  std::size_t gamma_index = 0;
  std::size_t chain = 0;
  double accept = 0.0;
  double esjd = 0.0;
  std::vector<EssResult> ess;
  double min_ess = 0.0;
  double wall_seconds = 0.0;
  double min_ess_per_sec = 0.0;
  double sigma2 = 0.0;  ///< log-likelihood estimator variance at the reference point
  std::string error;    ///< non-empty when the cell failed
  ChainTrace trace;
};

namespace detail {

inline FilterOptions sweep_filter(std::size_t N, bool with_score, double zeta) {
  FilterOptions f;
  f.n_particles = N;
  f.with_score = with_score;
  f.zeta = zeta;
  return f;
}

template <class M, class Adapter>
ChainTrace run_cell_chain(const M& model, const ObservationSeries& data, const Adapter& adapter, const Kernel& kernel,
                          const Eigen::VectorXd& x0, std::size_t N, const SweepSpec& s, Rng& rng) {
  const auto kind = kernel.config().kind;
  if (kind == KernelKind::idealized_langevin) {
    if constexpr (std::is_same_v<M, LgssModel>) {
      IdealizedLgssTarget<Adapter> target(model, data, adapter, sweep_filter(N, false, s.zeta));
      return run_chain(target, kernel, x0, s.iterations, s.burn_in, rng);
    } else {
      throw ConfigError("the idealized Langevin kernel is only available for lgss");
    }
  }
  ParticleTarget<M, Adapter> target(model, data, adapter, sweep_filter(N, uses_gradient(kind), s.zeta));
  return run_chain(target, kernel, x0, s.iterations, s.burn_in, rng);
}

}  // namespace detail

/// One chain per (N, gamma, chain) cell; cell seeds come from
/// (seed, N, gamma index, chain) so results do not depend on scheduling.
template <StateSpaceModel M, class Adapter>
  requires ProposalAdapter<Adapter, M>
std::vector<SweepCell> run_sweep(const M& model, const ObservationSeries& data, const Adapter& adapter,
                                 const Eigen::VectorXd& x0, const Eigen::VectorXd& x_ref, const Eigen::MatrixXd& V,
                                 const SweepSpec& s) {
  if (s.N.empty() || s.gamma.empty()) throw ConfigError("sweep grids must be non-empty");
  std::vector<double> sigma2(s.N.size());
  for (std::size_t i = 0; i < s.N.size(); ++i)
    sigma2[i] = log_likelihood_variance(model, data, adapter, x_ref, s.N[i], s.sigma2_runs, s.seed);

  std::vector<SweepCell> cells;
  for (std::size_t i = 0; i < s.N.size(); ++i)
    for (std::size_t g = 0; g < s.gamma.size(); ++g)
      for (std::size_t c = 0; c < s.chains; ++c) {
        SweepCell cell;
        cell.N = s.N[i];
        cell.gamma = s.gamma[g];
        cell.gamma_index = g;
        cell.chain = c;
        cell.sigma2 = sigma2[i];
        cells.push_back(std::move(cell));
      }

  parallel_for(cells.size(), s.workers, [&](std::size_t k) {
    auto& cell = cells[k];
    try {
      const Kernel kernel({s.kind, cell.gamma, V}, model.n_params());
      Rng rng = make_rng(s.seed, {cell.N, cell.gamma_index, cell.chain});
      cell.trace = detail::run_cell_chain(model, data, adapter, kernel, x0, cell.N, s, rng);
      const auto kept = cell.trace.kept_states();
      cell.accept = cell.trace.kept_acceptance_rate();
      cell.esjd = esjd(kept);
      cell.ess = ess_columns(kept);
      cell.min_ess = min_ess(cell.ess);
      cell.wall_seconds = cell.trace.wall_seconds;
      cell.min_ess_per_sec = cell.wall_seconds > 0 ? cell.min_ess / cell.wall_seconds : 0.0;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  return cells;
}

// ---------------------------------------------------------------------------
// Config-driven commands

struct CommandOptions {
  std::filesystem::path out;
  std::size_t workers = 1;
};

inline LgssParams lgss_params_from_map(const ParamMap& m) {
  return {m.at("alpha"), m.at("beta"), m.at("tau"), m.at("mu"), m.at("phi"), m.at("sigma")};
}

inline MixtureExpertsParams mixture_params_from_map(const ParamMap& m) {
  return {m.at("tau"), m.at("psi1"), m.at("psi2"), m.at("phi1"), m.at("phi2"),
          m.at("sigma1"), m.at("sigma2"), m.at("xi1"), m.at("xi2"), m.at("xi3")};
}

/// Observations from the configured file or simulated in memory.
inline ObservationSeries load_data(const ExperimentConfig& c) {
  if (c.data.path) return read_observations_csv(*c.data.path);
  if (!c.data.simulate) throw ConfigError("data: a path or a simulate block is required");
  const auto& s = *c.data.simulate;
  Rng rng = make_rng(s.seed, {0xda7a});
  try {
    if (c.model == ModelKind::lgss) return lgss_simulate(lgss_params_from_map(s.true_params), s.T, rng).observations;
    return mixture_simulate(mixture_params_from_map(s.true_params), s.T, rng).observations;
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("data.simulate.true_params: ") + e.what());
  }
}

/// Unconstrained starting/reference point: run.init, else the simulation's
/// true parameters.
inline Eigen::VectorXd reference_point(const ExperimentConfig& c) {
  const ParamMap* m = c.run.init ? &*c.run.init : (c.data.simulate ? &c.data.simulate->true_params : nullptr);
  if (!m) throw ConfigError("run.init is required when the data are not simulated");
  try {
    if (c.model == ModelKind::lgss) return LgssModel().to_unconstrained(lgss_params_from_map(*m));
    const auto p = mixture_params_from_map(*m);
    p.validate();
    return mixture_transform().to_unconstrained(p.to_vector());
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("initial parameters: ") + e.what());
  }
}

/// Calls fn(model, adapter) with the configured model and adapter.
template <class Fn>
decltype(auto) with_model(const ExperimentConfig& c, const ObservationSeries& data, Fn&& fn) {
  if (c.model == ModelKind::lgss) {
    LgssModel m;
    if (c.filter.adapter == AdapterKind::fully_adapted) return fn(m, fully_adapted_adapter(m));
    return fn(m, bootstrap_adapter());
  }
  MixtureModel m(MixturePrior{}, data[0]);
  if (c.filter.adapter == AdapterKind::fully_adapted) return fn(m, fully_adapted_adapter(m));
  return fn(m, bootstrap_adapter());
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void cmd_simulate_data(const ExperimentConfig& c, const CommandOptions& o) {
  if (!c.data.simulate) throw ConfigError("simulate-data requires a data.simulate block");
  const auto z = load_data(c);
  auto os = open_output(o.out / "data.csv");
  write_observations_csv(os, z);
  nlohmann::json side;
  side["model"] = to_string(c.model);
  side["seed"] = c.data.simulate->seed;
  side["T"] = c.data.simulate->T;
  side["true_params"] = c.data.simulate->true_params;
  write_json(o.out / "data.json", side);
}

inline std::size_t pilot_particles(const ExperimentConfig& c) {
  return c.kernel.pilot_N ? c.kernel.pilot_N : *std::max_element(c.filter.N.begin(), c.filter.N.end());
}

inline Eigen::MatrixXd run_config_pilot(const ExperimentConfig& c, const ObservationSeries& z, const CommandOptions& o) {
  const auto x0 = reference_point(c);
  const std::size_t N = pilot_particles(c);
  PilotOptions po;
  po.iterations = c.kernel.pilot_iterations;
  po.seed = derive_seed(c.run.seed, {0x9110});
  const auto res = with_model(c, z, [&](const auto& model, const auto& adapter) {
    FilterOptions f;
    f.n_particles = N;
    ParticleTarget target(model, z, adapter, f);
    return run_pilot(target, x0, po);
  });
  nlohmann::json j;
  j["matrix"] = matrix_to_json(res.covariance);
  j["dimension"] = res.covariance.rows();
  j["iterations"] = po.iterations;
  j["N"] = N;
  j["seed"] = c.run.seed;
  j["final_stage_acceptance"] = res.acceptance_rate;
  write_json(o.out / "preconditioner.json", j);
  return res.covariance;
}

inline void cmd_pilot(const ExperimentConfig& c, const CommandOptions& o) {
  const auto z = load_data(c);
  run_config_pilot(c, z, o);
}

inline Eigen::MatrixXd load_preconditioner(const std::filesystem::path& path, std::size_t n) {
  const auto j = read_json(path);
  const auto m = matrix_from_json(j.is_object() && j.contains("matrix") ? j["matrix"] : j);
  if (m.rows() != static_cast<Eigen::Index>(n) || m.cols() != static_cast<Eigen::Index>(n))
    throw ConfigError("preconditioner in " + path.string() + " has the wrong dimension");
  return m;
}

inline Eigen::MatrixXd config_preconditioner(const ExperimentConfig& c, const ObservationSeries& z, const CommandOptions& o) {
  const std::size_t n = parameter_names(c.model).size();
  switch (c.kernel.preconditioner) {
    case PreconditionerSource::identity: return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    case PreconditionerSource::file: return load_preconditioner(*c.kernel.preconditioner_path, n);
    case PreconditionerSource::pilot: break;
  }
  return run_config_pilot(c, z, o);
}

inline nlohmann::json cell_json(const SweepCell& cell, KernelKind kind) {
  nlohmann::json j;
  j["N"] = cell.N;
  j["gamma"] = cell.gamma;
  j["chain"] = cell.chain;
  j["kernel"] = std::string(to_string(kind));
  j["sigma2"] = cell.sigma2;
  if (!cell.error.empty()) {
    j["error"] = cell.error;
    return j;
  }
  j["acceptance_rate"] = cell.accept;
  j["esjd"] = cell.esjd;
  auto arr = nlohmann::json::array();
  for (const auto& e : cell.ess) arr.push_back({{"ess", e.ess}, {"capped", e.capped}, {"degenerate", e.degenerate}});
  j["ess"] = arr;
  j["min_ess"] = cell.min_ess;
  j["min_ess_per_sec"] = cell.min_ess_per_sec;
  j["wall_seconds"] = cell.wall_seconds;
  return j;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepCell>& cells) {
  os << "N,gamma,accept,esjd,min_ess_per_sec,sigma2\n";
  for (const auto& c : cells) {
    os << c.N << ',' << format_number(c.gamma) << ',';
    if (c.error.empty())
      os << format_number(c.accept) << ',' << format_number(c.esjd) << ',' << format_number(c.min_ess_per_sec);
    else
      os << "nan,nan,nan";
    os << ',' << format_number(c.sigma2) << '\n';
  }
}

inline std::vector<SweepCell> cmd_sweep(const ExperimentConfig& c, const CommandOptions& o) {
  const auto z = load_data(c);
  const auto x0 = reference_point(c);
  const auto V = config_preconditioner(c, z, o);
  SweepSpec s;
  s.kind = c.kernel.kind;
  s.N = c.filter.N;
  s.gamma = c.kernel.gamma;
  s.chains = c.run.chains;
  s.iterations = c.run.iterations;
  s.burn_in = c.run.burn_in;
  s.zeta = c.filter.zeta;
  s.seed = c.run.seed;
  s.workers = o.workers;
  auto cells = with_model(c, z, [&](const auto& model, const auto& adapter) {
    return run_sweep(model, z, adapter, x0, x0, V, s);
  });
  for (const auto& cell : cells) {
    const std::string stem = "N" + std::to_string(cell.N) + "_gamma" + format_number(cell.gamma) + "_chain" +
                             std::to_string(cell.chain);
    write_json(o.out / "cells" / (stem + ".json"), cell_json(cell, s.kind));
    if (cell.error.empty()) {
      auto os = open_output(o.out / "traces" / (stem + ".csv"));
      write_trace_csv(os, cell.trace);
    }
  }
  auto os = open_output(o.out / "sweep.csv");
  write_sweep_csv(os, cells);
  return cells;
}

/// Diagnostic points: the reference point plus states spread evenly over the
/// second half of a random-walk chain started there, a posterior sample.
template <PosteriorTarget T>
std::vector<Eigen::VectorXd> posterior_points(const T& target, const Eigen::VectorXd& x_ref, const Eigen::MatrixXd& V,
                                              std::size_t count, std::size_t iterations, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> pts{x_ref};
  if (count < 2) return pts;
  if (iterations < 2 * count) throw std::invalid_argument("posterior_points needs at least 2 iterations per point");
  Rng rng = make_rng(seed, {0xd1a6});
  const auto trace = run_chain(target, Kernel({KernelKind::random_walk, 1.0, V}, target.dimension()), x_ref,
                               iterations, iterations / 2, rng);
  const Eigen::MatrixXd kept = trace.kept_states();
  const auto m = static_cast<std::size_t>(kept.rows());
  for (std::size_t i = 1; i < count; ++i)
    pts.push_back(kept.row(static_cast<Eigen::Index>(i * m / (count - 1) - 1)).transpose());
  return pts;
}

inline void cmd_diagnose(const ExperimentConfig& c, const CommandOptions& o) {
  const auto z = load_data(c);
  const auto x_ref = reference_point(c);
  if (c.diagnose.points > 1 && c.kernel.preconditioner == PreconditionerSource::identity)
    throw ConfigError("diagnose with more than one point needs a pilot or file preconditioner");
  const auto V = config_preconditioner(c, z, o);
  const std::size_t n = static_cast<std::size_t>(x_ref.size());
  const Kernel kernel({KernelKind::langevin, 1.0, V}, n);

  with_model(c, z, [&](const auto& model, const auto& adapter) {
    using M = std::decay_t<decltype(model)>;
    std::vector<Eigen::VectorXd> points;
    if constexpr (std::is_same_v<M, LgssModel>) {
      points = posterior_points(KalmanTarget(model, z, false), x_ref, V, c.diagnose.points, c.diagnose.point_iterations,
                                c.run.seed);
    } else {
      FilterOptions f;
      f.n_particles = pilot_particles(c);
      points = posterior_points(ParticleTarget(model, z, adapter, f), x_ref, V, c.diagnose.points,
                                c.diagnose.point_iterations, c.run.seed);
    }
    const auto noise = noise_study(model, z, adapter, points, c.diagnose.N, c.diagnose.replicates,
                                   derive_seed(c.run.seed, {0x4015e}), o.workers);
    {
      auto os = open_output(o.out / "noise.csv");
      write_noise_csv(os, noise);
    }
    nlohmann::json nj;
    nj["slope"] = noise.slope;
    nj["warnings"] = noise.warnings;
    auto rows = nlohmann::json::array();
    for (const auto& r : noise.rows)
      rows.push_back({{"point_id", r.point_id}, {"N", r.N}, {"mean_loglik", r.mean_loglik}, {"var_logpost", r.var_logpost},
                      {"skew", r.skew}, {"kurt", r.kurt}});
    nj["rows"] = rows;
    write_json(o.out / "noise.json", nj);

    FilterOptions f;
    f.n_particles = c.diagnose.regime_N;
    f.with_score = true;
    f.zeta = c.filter.zeta;
    ParticleTarget noisy(model, z, adapter, f);
    ExactOracle exact;
    if constexpr (std::is_same_v<M, LgssModel>) {
      exact = [target = KalmanTarget(model, z)](const Eigen::VectorXd& x) { return target.evaluate(x); };
    } else {
      FilterOptions big = f;
      big.n_particles = 100 * c.diagnose.regime_N;
      exact = [target = ParticleTarget(model, z, adapter, big), seed = c.run.seed](const Eigen::VectorXd& x) {
        Rng rng = make_rng(seed, {0xb16});
        return target.evaluate(x, rng);
      };
    }
    const auto deltas = regime_deltas(noisy, exact, kernel, points, c.diagnose.regime_replicates,
                                      derive_seed(c.run.seed, {0xde17a}), o.workers);
    {
      auto os = open_output(o.out / "regime.csv");
      write_regime_csv(os, deltas);
    }
    const auto sm = summarize(deltas);
    write_json(o.out / "regime.json", {{"median_abs_deltaA", sm.median_abs_a},
                                       {"median_abs_deltaB", sm.median_abs_b},
                                       {"median_abs_deltaC", sm.median_abs_c},
                                       {"replicates", deltas.rows.size()},
                                       {"dropped", deltas.dropped},
                                       {"lambda2", kernel.lambda2()}});
    return 0;
  });
}

inline void cmd_theory(const ExperimentConfig& c, const CommandOptions& o) {
  using namespace theory;
  const auto& t = c.theory;
  const double ell_max = t.ell_max > 0.0 ? t.ell_max : 5.0 / std::cbrt(t.K);
  {
    auto os = open_output(o.out / "surface.csv");
    os << "ell,sigma2,alpha,eff\n";
    for (std::size_t i = 1; i <= t.ell_steps; ++i) {
      const double ell = ell_max * static_cast<double>(i) / static_cast<double>(t.ell_steps);
      for (std::size_t k = 1; k <= t.sigma2_steps; ++k) {
        const double s2 = t.sigma2_max * static_cast<double>(k) / static_cast<double>(t.sigma2_steps);
        const RegimeSpec r{std::numeric_limits<double>::infinity(), {t.K, 0.0, 0.0}, s2};
        os << format_number(ell) << ',' << format_number(s2) << ',' << format_number(limiting_acceptance(r, ell)) << ','
           << format_number(efficiency(r, ell)) << '\n';
      }
    }
  }
  std::vector<double> sigmas(t.sigma_steps);
  for (std::size_t i = 0; i < t.sigma_steps; ++i)
    sigmas[i] = t.sigma_steps == 1 ? t.sigma_min
                                   : t.sigma_min + (t.sigma_max - t.sigma_min) * static_cast<double>(i) / (t.sigma_steps - 1);
  std::vector<MaximinResult> mm(sigmas.size());
  parallel_for(sigmas.size(), o.workers, [&](std::size_t i) { mm[i] = maximin_acceptance(sigmas[i]); });
  {
    auto os = open_output(o.out / "maximin.csv");
    os << "sigma,alpha_maximin,worst_eff\n";
    for (std::size_t i = 0; i < sigmas.size(); ++i)
      os << format_number(sigmas[i]) << ',' << format_number(mm[i].alpha) << ',' << format_number(mm[i].worst_efficiency)
         << '\n';
  }
  const auto opt = optimal_params(t.K);
  write_json(o.out / "theory.json", {{"K", t.K},
                                     {"ell_opt", opt.ell},
                                     {"sigma2_opt", opt.sigma2},
                                     {"alpha_opt", opt.alpha},
                                     {"a_hat", opt.a_hat}});
}

}  // namespace pmala
