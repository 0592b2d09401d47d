#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmala/mcmc.hpp"

namespace pmala {

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ModelKind { lgss, mixture_experts };
enum class AdapterKind { bootstrap, fully_adapted };
enum class PreconditionerSource { pilot, file, identity };

using ParamMap = std::map<std::string, double>;

struct SimulateSpec {
  std::uint64_t seed = 0;
  std::size_t T = 500;
  ParamMap true_params;
  bool operator==(const SimulateSpec&) const = default;
};

struct DataConfig {
  std::optional<std::string> path;
  std::optional<SimulateSpec> simulate;
  bool operator==(const DataConfig&) const = default;
};

struct FilterConfig {
  std::vector<std::size_t> N{20};
  AdapterKind adapter = AdapterKind::fully_adapted;
  double zeta = kDefaultShrinkage;
  bool operator==(const FilterConfig&) const = default;
};

struct KernelSection {
  KernelKind kind = KernelKind::langevin;
  std::vector<double> gamma{1.0};
  PreconditionerSource preconditioner = PreconditionerSource::pilot;
  std::optional<std::string> preconditioner_path;
  std::size_t pilot_iterations = 20000;
  std::size_t pilot_N = 0;  ///< 0: the largest N of the filter grid
  bool operator==(const KernelSection&) const = default;
};

struct RunConfig {
  std::size_t iterations = 20000;
  std::size_t burn_in = 2000;
  std::uint64_t seed = 0;
  std::size_t chains = 1;
  std::size_t workers = 1;
  std::optional<ParamMap> init;  ///< starting point; defaults to the simulation's true parameters
  bool operator==(const RunConfig&) const = default;
};

struct DiagnoseConfig {
  std::size_t points = 5;
  std::vector<std::size_t> N{5, 10, 20, 40, 80};
  std::size_t replicates = 500;
  std::size_t regime_N = 20;
  std::size_t regime_replicates = 200;
  std::size_t point_iterations = 5000;  ///< random-walk chain supplying the posterior points
  bool operator==(const DiagnoseConfig&) const = default;
};

struct TheoryConfig {
  double K = 1.0;
  double sigma_min = 0.5, sigma_max = 3.0;
  std::size_t sigma_steps = 26;
  double ell_max = 0.0;  ///< 0: 5 K^{-1/3}
  std::size_t ell_steps = 100;
  double sigma2_max = 10.0;
  std::size_t sigma2_steps = 100;
  bool operator==(const TheoryConfig&) const = default;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::lgss;
  DataConfig data;
  FilterConfig filter;
  KernelSection kernel;
  RunConfig run;
  DiagnoseConfig diagnose;
  TheoryConfig theory;
  std::string output = "results";
  bool operator==(const ExperimentConfig&) const = default;
};

inline std::string to_string(ModelKind m) { return m == ModelKind::lgss ? "lgss" : "mixture-experts"; }
inline std::string to_string(AdapterKind a) { return a == AdapterKind::bootstrap ? "bootstrap" : "fully-adapted"; }
inline std::string to_string(PreconditionerSource s) {
  switch (s) {
    case PreconditionerSource::pilot: return "pilot";
    case PreconditionerSource::file: return "file";
    case PreconditionerSource::identity: return "identity";
  }
  return "?";
}

inline const std::vector<std::string>& parameter_names(ModelKind m) {
  static const std::vector<std::string> lgss{"alpha", "beta", "tau", "mu", "phi", "sigma"};
  static const std::vector<std::string> mix{"tau", "psi1", "psi2", "phi1", "phi2", "sigma1", "sigma2", "xi1", "xi2", "xi3"};
  return m == ModelKind::lgss ? lgss : mix;
}

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
T get_as(const json& j, const std::string& where) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) throw ConfigError(where + " must be a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0))
        throw ConfigError(where + " must be a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError(where + " must be a string");
    }
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

template <class T>
void read_opt(const json& j, const char* key, const std::string& where, T& out) {
  if (j.contains(key)) out = get_as<T>(j.at(key), where + "." + key);
}

template <class T>
void read_list(const json& j, const char* key, const std::string& where, std::vector<T>& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  const std::string w = where + "." + key;
  if (!a.is_array()) throw ConfigError(w + " must be a list");
  out.clear();
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(get_as<T>(a[i], w + "[" + std::to_string(i) + "]"));
}

inline ParamMap read_params(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object of parameter values");
  ParamMap m;
  for (const auto& [k, v] : j.items()) m[k] = get_as<double>(v, where + "." + k);
  return m;
}

template <class E>
E parse_enum(const json& j, const std::string& where, std::initializer_list<std::pair<const char*, E>> options) {
  const auto s = get_as<std::string>(j, where);
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += std::string(names.empty() ? "" : ", ") + name;
  }
  throw ConfigError(where + " must be one of {" + names + "}, got '" + s + "'");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c);

/// Parse and validate a configuration; unknown keys are errors.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read_list;
  using detail::read_opt;
  check_keys(j, "config", {"model", "data", "filter", "kernel", "run", "diagnose", "theory", "output"});
  ExperimentConfig c;
  if (j.contains("model"))
    c.model = detail::parse_enum<ModelKind>(j["model"], "model",
                                            {{"lgss", ModelKind::lgss}, {"mixture-experts", ModelKind::mixture_experts}});
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"path", "simulate"});
    if (d.contains("path")) c.data.path = detail::get_as<std::string>(d["path"], "data.path");
    if (d.contains("simulate")) {
      const auto& s = d["simulate"];
      check_keys(s, "data.simulate", {"seed", "T", "true_params"});
      if (!s.contains("seed")) throw ConfigError("data.simulate.seed is required (seeds must be explicit)");
      SimulateSpec sp;
      read_opt(s, "seed", "data.simulate", sp.seed);
      read_opt(s, "T", "data.simulate", sp.T);
      if (!s.contains("true_params")) throw ConfigError("data.simulate.true_params is required");
      sp.true_params = detail::read_params(s["true_params"], "data.simulate.true_params");
      c.data.simulate = sp;
    }
  }
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    check_keys(f, "filter", {"N", "adapter", "zeta"});
    read_list(f, "N", "filter", c.filter.N);
    if (f.contains("adapter"))
      c.filter.adapter = detail::parse_enum<AdapterKind>(
          f["adapter"], "filter.adapter", {{"bootstrap", AdapterKind::bootstrap}, {"fully-adapted", AdapterKind::fully_adapted}});
    read_opt(f, "zeta", "filter", c.filter.zeta);
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    check_keys(k, "kernel", {"kind", "gamma", "preconditioner", "preconditioner_path", "pilot_iterations", "pilot_N"});
    if (k.contains("kind")) {
      try {
        c.kernel.kind = kernel_kind_from_string(detail::get_as<std::string>(k["kind"], "kernel.kind"));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("kernel.kind: ") + e.what());
      }
    }
    read_list(k, "gamma", "kernel", c.kernel.gamma);
    if (k.contains("preconditioner"))
      c.kernel.preconditioner = detail::parse_enum<PreconditionerSource>(
          k["preconditioner"], "kernel.preconditioner",
          {{"pilot", PreconditionerSource::pilot}, {"file", PreconditionerSource::file}, {"identity", PreconditionerSource::identity}});
    if (k.contains("preconditioner_path"))
      c.kernel.preconditioner_path = detail::get_as<std::string>(k["preconditioner_path"], "kernel.preconditioner_path");
    read_opt(k, "pilot_iterations", "kernel", c.kernel.pilot_iterations);
    read_opt(k, "pilot_N", "kernel", c.kernel.pilot_N);
  }
  if (j.contains("run")) {
    const auto& r = j["run"];
    check_keys(r, "run", {"iterations", "burn_in", "seed", "chains", "workers", "init"});
    if (!r.contains("seed")) throw ConfigError("run.seed is required (seeds must be explicit)");
    read_opt(r, "iterations", "run", c.run.iterations);
    read_opt(r, "burn_in", "run", c.run.burn_in);
    read_opt(r, "seed", "run", c.run.seed);
    read_opt(r, "chains", "run", c.run.chains);
    read_opt(r, "workers", "run", c.run.workers);
    if (r.contains("init")) c.run.init = detail::read_params(r["init"], "run.init");
  }
  if (j.contains("diagnose")) {
    const auto& d = j["diagnose"];
    check_keys(d, "diagnose", {"points", "N", "replicates", "regime_N", "regime_replicates", "point_iterations"});
    read_opt(d, "points", "diagnose", c.diagnose.points);
    read_list(d, "N", "diagnose", c.diagnose.N);
    read_opt(d, "replicates", "diagnose", c.diagnose.replicates);
    read_opt(d, "regime_N", "diagnose", c.diagnose.regime_N);
    read_opt(d, "regime_replicates", "diagnose", c.diagnose.regime_replicates);
    read_opt(d, "point_iterations", "diagnose", c.diagnose.point_iterations);
  }
  if (j.contains("theory")) {
    const auto& t = j["theory"];
    check_keys(t, "theory", {"K", "sigma_min", "sigma_max", "sigma_steps", "ell_max", "ell_steps", "sigma2_max", "sigma2_steps"});
    read_opt(t, "K", "theory", c.theory.K);
    read_opt(t, "sigma_min", "theory", c.theory.sigma_min);
    read_opt(t, "sigma_max", "theory", c.theory.sigma_max);
    read_opt(t, "sigma_steps", "theory", c.theory.sigma_steps);
    read_opt(t, "ell_max", "theory", c.theory.ell_max);
    read_opt(t, "ell_steps", "theory", c.theory.ell_steps);
    read_opt(t, "sigma2_max", "theory", c.theory.sigma2_max);
    read_opt(t, "sigma2_steps", "theory", c.theory.sigma2_steps);
  }
  if (j.contains("output")) c.output = detail::get_as<std::string>(j["output"], "output");
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  try {
    return parse_config(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

/// Every field written explicitly, so parse(emit(c)) == c.
inline nlohmann::json emit_config(const ExperimentConfig& c) {
  nlohmann::json j;
  j["model"] = to_string(c.model);
  nlohmann::json d = nlohmann::json::object();
  if (c.data.path) d["path"] = *c.data.path;
  if (c.data.simulate) d["simulate"] = {{"seed", c.data.simulate->seed}, {"T", c.data.simulate->T}, {"true_params", c.data.simulate->true_params}};
  j["data"] = d;
  j["filter"] = {{"N", c.filter.N}, {"adapter", to_string(c.filter.adapter)}, {"zeta", c.filter.zeta}};
  j["kernel"] = {{"kind", std::string(to_string(c.kernel.kind))},
                 {"gamma", c.kernel.gamma},
                 {"preconditioner", to_string(c.kernel.preconditioner)},
                 {"pilot_iterations", c.kernel.pilot_iterations},
                 {"pilot_N", c.kernel.pilot_N}};
  if (c.kernel.preconditioner_path) j["kernel"]["preconditioner_path"] = *c.kernel.preconditioner_path;
  j["run"] = {{"iterations", c.run.iterations}, {"burn_in", c.run.burn_in}, {"seed", c.run.seed},
              {"chains", c.run.chains}, {"workers", c.run.workers}};
  if (c.run.init) j["run"]["init"] = *c.run.init;
  j["diagnose"] = {{"points", c.diagnose.points}, {"N", c.diagnose.N}, {"replicates", c.diagnose.replicates},
                   {"regime_N", c.diagnose.regime_N}, {"regime_replicates", c.diagnose.regime_replicates},
                   {"point_iterations", c.diagnose.point_iterations}};
  j["theory"] = {{"K", c.theory.K}, {"sigma_min", c.theory.sigma_min}, {"sigma_max", c.theory.sigma_max},
                 {"sigma_steps", c.theory.sigma_steps}, {"ell_max", c.theory.ell_max}, {"ell_steps", c.theory.ell_steps},
                 {"sigma2_max", c.theory.sigma2_max}, {"sigma2_steps", c.theory.sigma2_steps}};
  j["output"] = c.output;
  return j;
}

inline void check_param_map(ModelKind m, const ParamMap& p, const std::string& where) {
  const auto& names = parameter_names(m);
  for (const auto& n : names)
    if (!p.count(n)) throw ConfigError(where + " is missing parameter '" + n + "'");
  for (const auto& [k, _] : p)
    if (std::find(names.begin(), names.end(), k) == names.end())
      throw ConfigError("unknown parameter '" + k + "' in " + where + " for model " + to_string(m));
}

inline void validate(const ExperimentConfig& c) {
  if (c.data.path && c.data.simulate) throw ConfigError("data: give either path or simulate, not both");
  if (c.data.simulate) {
    const std::size_t min_T = c.model == ModelKind::mixture_experts ? 2 : 1;
    if (c.data.simulate->T < min_T) throw ConfigError("data.simulate.T must be at least " + std::to_string(min_T));
    check_param_map(c.model, c.data.simulate->true_params, "data.simulate.true_params");
  }
  if (c.filter.N.empty()) throw ConfigError("filter.N must be non-empty");
  for (auto n : c.filter.N)
    if (n < 1) throw ConfigError("filter.N entries must be >= 1");
  if (!(c.filter.zeta > 0.0 && c.filter.zeta <= 1.0)) throw ConfigError("filter.zeta must lie in (0, 1]");
  if (c.kernel.gamma.empty()) throw ConfigError("kernel.gamma must be non-empty");
  for (double g : c.kernel.gamma)
    if (!(g > 0.0)) throw ConfigError("kernel.gamma entries must be positive");
  if (c.kernel.kind == KernelKind::idealized_langevin && c.model != ModelKind::lgss)
    throw ConfigError("the idealized Langevin kernel needs an exact gradient and is only available for lgss");
  if (c.kernel.preconditioner == PreconditionerSource::file && !c.kernel.preconditioner_path)
    throw ConfigError("kernel.preconditioner = file requires kernel.preconditioner_path");
  if (c.run.iterations <= c.run.burn_in) throw ConfigError("run.iterations must exceed run.burn_in");
  if (c.run.chains < 1) throw ConfigError("run.chains must be >= 1");
  if (c.run.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (c.run.init) check_param_map(c.model, *c.run.init, "run.init");
  if (c.diagnose.N.empty()) throw ConfigError("diagnose.N must be non-empty");
  if (c.diagnose.replicates < 100) throw ConfigError("diagnose.replicates must be >= 100");
  if (c.diagnose.points < 1 || c.diagnose.regime_N < 1 || c.diagnose.regime_replicates < 1)
    throw ConfigError("diagnose.points, regime_N and regime_replicates must be >= 1");
  if (c.diagnose.points > 1 && c.diagnose.point_iterations < 2 * c.diagnose.points)
    throw ConfigError("diagnose.point_iterations must be at least twice diagnose.points");
  const auto& t = c.theory;
  if (!(t.K > 0.0)) throw ConfigError("theory.K must be positive");
  if (!(t.sigma_min > 0.0 && t.sigma_max >= t.sigma_min)) throw ConfigError("theory sigma range must satisfy 0 < sigma_min <= sigma_max");
  if (t.sigma_steps < 1 || t.ell_steps < 1 || t.sigma2_steps < 1) throw ConfigError("theory grid sizes must be >= 1");
  if (!(t.ell_max >= 0.0) || !(t.sigma2_max > 0.0)) throw ConfigError("theory ell_max must be >= 0 and sigma2_max > 0");
}

}  // namespace pmala
