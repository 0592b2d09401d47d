// Command-line front end: simulate-data, pilot, sweep, diagnose, theory.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "pmala/pmala.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out;
};

void add_flags(CLI::App* cmd, Flags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "experiment configuration (JSON)");
  if (config_required) c->required();
  cmd->add_option("--seed", f.seed, "override the master seed");
  cmd->add_option("--workers", f.workers, "number of worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "output directory (overrides the config)");
}

pmala::ExperimentConfig load_config(const Flags& f, bool simulate_seed) {
  pmala::ExperimentConfig c;
  if (!f.config.empty()) {
    std::ifstream is(f.config);
    if (!is) throw pmala::IoError("cannot open config " + f.config);
    std::stringstream ss;
    ss << is.rdbuf();
    c = pmala::parse_config(ss.str());
  }
  if (f.seed) {
    if (simulate_seed && c.data.simulate) c.data.simulate->seed = *f.seed;
    c.run.seed = *f.seed;
  }
  if (f.workers) c.run.workers = *f.workers;
  if (!f.out.empty()) c.output = f.out;
  pmala::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-marginal particle Langevin experiments"};
  app.require_subcommand(1);
  Flags flags;
  auto* sim = app.add_subcommand("simulate-data", "simulate observations and write data.csv + data.json");
  auto* pilot = app.add_subcommand("pilot", "random-walk pilot run; writes preconditioner.json");
  auto* sweep = app.add_subcommand("sweep", "one chain per (N, gamma) cell; writes sweep.csv and per-cell JSON");
  auto* diag = app.add_subcommand("diagnose", "noise study and regime diagnostics");
  auto* theory = app.add_subcommand("theory", "acceptance/efficiency surface and maximin tables");
  for (auto* cmd : {sim, pilot, sweep, diag}) add_flags(cmd, flags, true);
  add_flags(theory, flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    const auto config = load_config(flags, sim->parsed());
    pmala::CommandOptions opts{config.output, config.run.workers};
    if (sim->parsed()) {
      pmala::cmd_simulate_data(config, opts);
    } else if (pilot->parsed()) {
      pmala::cmd_pilot(config, opts);
    } else if (sweep->parsed()) {
      const auto cells = pmala::cmd_sweep(config, opts);
      for (const auto& c : cells)
        if (!c.error.empty()) std::cerr << "cell N=" << c.N << " gamma=" << c.gamma << " failed: " << c.error << '\n';
    } else if (diag->parsed()) {
      pmala::cmd_diagnose(config, opts);
    } else {
      pmala::cmd_theory(config, opts);
    }
  } catch (const pmala::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
