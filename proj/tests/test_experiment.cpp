#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pmala/pmala.hpp"

namespace pmala {
namespace {

namespace fs = std::filesystem;

const char* kSmallConfig = R"({
  "model": "lgss",
  "data": {"simulate": {"seed": 7, "T": 40,
    "true_params": {"alpha": 0.2, "beta": 1.0, "tau": 1.0, "mu": 0.1, "phi": 0.9, "sigma": 0.15}}},
  "filter": {"N": [5, 10], "adapter": "fully-adapted", "zeta": 0.95},
  "kernel": {"kind": "langevin", "gamma": [0.5, 1.0], "preconditioner": "pilot", "pilot_iterations": 600},
  "run": {"iterations": 300, "burn_in": 50, "seed": 3, "chains": 2, "workers": 2},
  "diagnose": {"points": 2, "N": [5, 10], "replicates": 100, "regime_N": 10, "regime_replicates": 20}
})";

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("pmala_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Drops the named CSV column so wall-clock fields can be ignored.
std::string drop_column(const std::string& csv, const std::string& column) {
  std::istringstream is(csv);
  std::string line, out;
  int idx = -1;
  bool header = true;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (header) {
      for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i] == column) idx = static_cast<int>(i);
      header = false;
    }
    for (std::size_t i = 0; i < f.size(); ++i)
      if (static_cast<int>(i) != idx) out += f[i] + ',';
    out += '\n';
  }
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PMALA_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(Config, EmitParseRoundTrip) {
  const auto c = parse_config(std::string(kSmallConfig));
  const auto again = parse_config(emit_config(c));
  EXPECT_EQ(c, again);
  EXPECT_EQ(emit_config(again), emit_config(c));
}

TEST(Config, DefaultsFilledIn) {
  const auto c = parse_config(std::string(R"({"run": {"seed": 1}})"));
  EXPECT_EQ(c.model, ModelKind::lgss);
  EXPECT_EQ(c.filter.N, std::vector<std::size_t>{20});
  EXPECT_EQ(c.kernel.kind, KernelKind::langevin);
  EXPECT_DOUBLE_EQ(c.filter.zeta, 0.95);
}

TEST(Config, ShippedConfigParses) {
  const auto c = parse_config(read_json(fs::path(PMALA_SOURCE_DIR) / "configs" / "lgss_desk.json"));
  EXPECT_EQ(c.filter.N, (std::vector<std::size_t>{5, 10, 20, 40}));
  EXPECT_EQ(c.kernel.gamma, (std::vector<double>{0.5, 1.0, 1.5, 2.0}));
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(parse_config(std::string(R"({"run": {"seed": 1}, "colour": 3})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"run": {"seed": 1, "speed": 3}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"run": {"seed": 1}, "filter": {"n": [5]}})")), ConfigError);
}

TEST(Config, ValidationErrors) {
  const std::vector<std::string> bad{
      R"({"run": {"seed": 1}, "kernel": {"gamma": []}})",
      R"({"run": {"seed": 1}, "kernel": {"gamma": [0.0]}})",
      R"({"run": {"seed": 1}, "filter": {"N": []}})",
      R"({"run": {"seed": 1}, "filter": {"N": [0]}})",
      R"({"run": {"seed": 1}, "filter": {"zeta": 0}})",
      R"({"run": {"seed": 1}, "filter": {"zeta": 1.1}})",
      R"({"run": {"seed": 1}, "filter": {"adapter": "guided"}})",
      R"({"run": {"seed": 1}, "kernel": {"kind": "hmc"}})",
      R"({"run": {"seed": 1, "iterations": 10, "burn_in": 10}})",
      R"({"run": {}})",
      R"({"run": {"seed": -1}})",
      R"({"run": {"seed": 1}, "data": {"simulate": {"T": 5, "true_params": {}}}})",
      R"({"run": {"seed": 1}, "data": {"simulate": {"seed": 1, "true_params": {"alpha": 1}}}})",
      R"({"run": {"seed": 1}, "diagnose": {"replicates": 99}})",
      R"({"run": {"seed": 1}, "kernel": {"preconditioner": "file"}})",
      R"({"model": "mixture-experts", "run": {"seed": 1}, "kernel": {"kind": "idealized-langevin"}})",
      R"({"run": {"seed": 1}, "filter": {"N": "20"}})",
      R"({"run": {"seed": 1}, "diagnose": {"points": 5, "point_iterations": 9}})",
      R"({"run": {"seed": 1}, "output": 5})",
      R"(not json)",
  };
  for (const auto& s : bad) EXPECT_THROW(parse_config(s), ConfigError) << s;
}

TEST(Io, ObservationCsvRoundTrip) {
  const ObservationSeries z({0.1, -2.5, 1e-17, 3.141592653589793});
  std::stringstream ss;
  write_observations_csv(ss, z);
  const auto back = read_observations_csv(ss);
  ASSERT_EQ(back.size(), z.size());
  for (std::size_t t = 0; t < z.size(); ++t) EXPECT_EQ(back[t], z[t]);
}

TEST(Io, ObservationCsvErrors) {
  std::stringstream a("x,y\n1,2\n");
  EXPECT_THROW(read_observations_csv(a), IoError);
  std::stringstream b("t,z\n1,abc\n");
  EXPECT_THROW(read_observations_csv(b), IoError);
  std::stringstream c("");
  EXPECT_THROW(read_observations_csv(c), IoError);
  EXPECT_THROW(read_observations_csv(fs::path("/nonexistent/data.csv")), IoError);
}

TEST(Io, MatrixJsonRoundTrip) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2.5, -3, 4e-9, 5, 6;
  EXPECT_EQ(matrix_from_json(matrix_to_json(m)), m);
  EXPECT_THROW(matrix_from_json(nlohmann::json::array()), IoError);
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse("[[1,2],[3]]")), IoError);
}

TEST(Experiment, SweepHasOneRowPerCellAndChain) {
  const LgssModel m;
  const LgssParams p{0.2, 1.0, 1.0, 0.1, 0.9, 0.15};
  Rng rng(5);
  const auto z = lgss_simulate(p, 30, rng).observations;
  const auto x0 = m.to_unconstrained(p);
  SweepSpec s;
  s.kind = KernelKind::langevin;
  s.N = {5, 10, 20};
  s.gamma = {0.5, 1.0};
  s.chains = 2;
  s.iterations = 60;
  s.burn_in = 10;
  s.seed = 4;
  const auto cells = run_sweep(m, z, FullyAdaptedLgss{}, x0, x0, 0.01 * Eigen::MatrixXd::Identity(6, 6), s);
  EXPECT_EQ(cells.size(), 3u * 2u * 2u);
  for (const auto& c : cells) EXPECT_TRUE(c.error.empty()) << c.error;
  std::ostringstream os;
  write_sweep_csv(os, cells);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "N,gamma,accept,esjd,min_ess_per_sec,sigma2");
}

TEST(Experiment, PosteriorPointsComeFromChain) {
  const LgssModel m;
  const LgssParams p{0.2, 1.0, 1.0, 0.1, 0.9, 0.15};
  Rng rng(5);
  const auto z = lgss_simulate(p, 30, rng).observations;
  const auto x0 = m.to_unconstrained(p);
  const KalmanTarget target(m, z, false);
  const Eigen::MatrixXd V = 0.01 * Eigen::MatrixXd::Identity(6, 6);
  const auto a = posterior_points(target, x0, V, 4, 400, 9);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], x0);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_TRUE(target.evaluate(a[i]).ok());
  EXPECT_EQ(posterior_points(target, x0, V, 4, 400, 9)[3], a[3]);
  EXPECT_EQ(posterior_points(target, x0, V, 1, 0, 9).size(), 1u);
  EXPECT_THROW(posterior_points(target, x0, V, 4, 7, 9), std::invalid_argument);
}

TEST(Cli, SameSeedGivesIdenticalOutputs) {
  const auto dir = scratch_dir("cli");
  {
    std::ofstream(dir / "config.json") << kSmallConfig;
  }
  const std::string cfg = "--config \"" + (dir / "config.json").string() + "\"";
  for (const char* run : {"a", "b"}) {
    const std::string out = " --out \"" + (dir / run).string() + "\"";
    ASSERT_EQ(run_cli("simulate-data " + cfg + out), 0);
    ASSERT_EQ(run_cli("pilot " + cfg + out), 0);
    ASSERT_EQ(run_cli("sweep " + cfg + out), 0);
  }
  EXPECT_EQ(slurp(dir / "a" / "data.csv"), slurp(dir / "b" / "data.csv"));
  EXPECT_EQ(slurp(dir / "a" / "preconditioner.json"), slurp(dir / "b" / "preconditioner.json"));
  EXPECT_EQ(drop_column(slurp(dir / "a" / "sweep.csv"), "min_ess_per_sec"),
            drop_column(slurp(dir / "b" / "sweep.csv"), "min_ess_per_sec"));
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "traces")) {
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / "traces" / e.path().filename())) << e.path();
    ++traces;
  }
  EXPECT_EQ(traces, 2u * 2u * 2u);
  const auto sweep = slurp(dir / "a" / "sweep.csv");
  EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 1 + 8);
  fs::remove_all(dir);
}

TEST(Cli, TheoryWritesTables) {
  const auto dir = scratch_dir("theory");
  ASSERT_EQ(run_cli("theory --out \"" + dir.string() + "\""), 0);
  for (const char* f : {"surface.csv", "maximin.csv", "theory.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("codes");
  {
    std::ofstream(dir / "bad.json") << R"({"run": {"seed": 1}, "kernel": {"gamma": []}})";
    std::ofstream(dir / "nodata.json") << R"({"run": {"seed": 1}, "data": {"path": "/nonexistent/z.csv"}})";
  }
  EXPECT_EQ(run_cli("sweep --config \"" + (dir / "bad.json").string() + "\""), 2);
  EXPECT_EQ(run_cli("sweep"), 2);
  EXPECT_EQ(run_cli("bogus"), 2);
  EXPECT_EQ(run_cli("sweep --config \"" + (dir / "missing.json").string() + "\""), 3);
  EXPECT_EQ(run_cli("pilot --config \"" + (dir / "nodata.json").string() + "\" --out \"" + dir.string() + "\""), 3);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace pmala
