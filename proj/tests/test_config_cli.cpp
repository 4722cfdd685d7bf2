#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hetnl/commands.hpp"

using namespace hetnl;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(HETNL_SOURCE_DIR) / "configs";

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string &name) {
  const fs::path d = fs::temp_directory_path() / ("hetnl_cli_" + name);
  fs::remove_all(d);
  return d;
}

int run_cli(const std::string &args) {
  const std::string cmd = std::string(HETNL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cfg(const std::string &name) { return "--config " + (kConfigs / (name + ".toml")).string(); }

} // namespace

TEST(Config, PresetsAndRoundTrip) {
  for (const std::string name : {"interval", "example1", "example2", "example3"}) {
    const RunConfig c = preset_config(name);
    const RunConfig d = parse_config(config_toml(c));
    EXPECT_EQ(config_toml(c), config_toml(d)) << name;
    EXPECT_EQ(d.preset, name);
  }
  EXPECT_THROW(preset_config("example9"), ConfigError);
}

TEST(Config, FileKeysOverridePreset) {
  const RunConfig c = parse_config("preset = \"example2\"\n[profile]\ndelta = 0.025\n[mesh]\nh_int = 0.01\n");
  EXPECT_EQ(c.delta, 0.025);
  EXPECT_EQ(c.grading.h_int, 0.01);
  EXPECT_EQ(c.constraint, "neumann");
}

TEST(Config, StrictReaderRejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(parse_config("[profile]\ndelt = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("[profiles]\ndelta = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("[profile]\ndelta = \"small\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[profile\n"), ConfigError);
  EXPECT_THROW(load_config(kConfigs / "missing.toml"), ConfigError);
}

TEST(Config, AllShippedConfigsLoad) {
  for (const auto &e : fs::directory_iterator(kConfigs))
    if (e.path().extension() == ".toml") {
      EXPECT_NO_THROW(load_config(e.path())) << e.path();
    }
}

TEST(Config, CatalogueFunctions) {
  using hetnl::catalogue_function;
  EXPECT_EQ(catalogue_function("one", 1, 1)({0.3, 0}), 1.0);
  EXPECT_DOUBLE_EQ(catalogue_function("affine:1,2,3", 2, 1)({1, 1}), 6.0);
  EXPECT_DOUBLE_EQ(catalogue_function("const:2.5", 1, 1)({0.1, 0}), 2.5);
  EXPECT_NEAR(catalogue_function("manufactured_sin", 1, 2.0 / 3)({0.5, 0}), 2.0 / 3 * pi * pi, 1e-14);
  EXPECT_NEAR(catalogue_function("sin_pi", 2, 1)({0.5, 0.5}), 1.0, 1e-15);
  EXPECT_THROW(catalogue_function("nope", 1, 1), ConfigError);
  EXPECT_THROW(catalogue_function("affine:1,2", 1, 1), ConfigError);
}

TEST(Config, BuildersHonorTheConfig) {
  RunConfig c = preset_config("example1");
  c.grading.h_int = 0.02;
  c.grading.h_min = 1e-3;
  const ProblemSpec s = make_problem(c, 0.05);
  EXPECT_EQ(s.profile.delta(), 0.05);
  EXPECT_EQ(s.lower.m, 3.0);
  EXPECT_EQ(s.lower.f.size(), s.mesh->num_nodes());
  EXPECT_EQ(s.constraint.kind, ConstraintKind::Dirichlet);
  EXPECT_FALSE(quadratic_run(c));
  EXPECT_TRUE(quadratic_run(preset_config("example2")));
}

TEST(Cli, VerifyPassesOnInterval) {
  const fs::path out = fresh_dir("verify");
  EXPECT_EQ(run_cli("verify " + cfg("interval") + " --out " + out.string()), 0);
  const std::string csv = slurp(out / "verify.csv");
  EXPECT_EQ(csv.rfind("check_name,measured,bound,pass\n", 0), 0u);
  EXPECT_EQ(csv.find(",0\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "config.toml"));
  EXPECT_NO_THROW(load_config(out / "config.toml"));
}

TEST(Cli, VerifyFailsOnInadmissibleDelta) {
  const fs::path out = fresh_dir("inadmissible");
  EXPECT_EQ(run_cli("verify " + cfg("inadmissible") + " --out " + out.string()), 1);
  const std::string csv = slurp(out / "verify.csv");
  EXPECT_NE(csv.find("delta_admissible"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitWithThree) {
  const fs::path dir = fresh_dir("bad");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.toml") << "[kernel]\nbogus = 1\n";
  EXPECT_EQ(run_cli("solve --config " + (dir / "bad.toml").string() + " --out " + dir.string()), 3);
  EXPECT_NE(run_cli("solve"), 0);
}

TEST(Cli, NeumannSolveWritesZeroMeanReport) {
  const fs::path out = fresh_dir("example2");
  ASSERT_EQ(run_cli("solve " + cfg("example2") + " --out " + out.string()), 0);
  for (const char *f : {"solution.csv", "trace.csv", "energy.csv", "report.json", "config.toml"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto j = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_LE(std::abs(j["mean"].get<double>()), 1e-12);
  EXPECT_EQ(j["method"], "conjugate_gradient");
}

TEST(Cli, SeededSolvesAreByteIdentical) {
  const fs::path a = fresh_dir("seed_a"), b = fresh_dir("seed_b");
  ASSERT_EQ(run_cli("solve " + cfg("example1") + " --seed 5 --out " + a.string()), 0);
  ASSERT_EQ(run_cli("solve " + cfg("example1") + " --seed 5 --threads 1 --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "solution.csv"), slurp(b / "solution.csv"));
  EXPECT_EQ(slurp(a / "energy.csv"), slurp(b / "energy.csv"));
  const auto j = nlohmann::json::parse(slurp(a / "report.json"));
  EXPECT_EQ(j["seed"].get<int>(), 5);
}

TEST(Cli, StudiesWriteTheirTables) {
  const fs::path g = fresh_dir("gamma");
  ASSERT_EQ(run_cli("gamma-study " + cfg("manufactured") + " --out " + g.string()), 0);
  const std::string study = slurp(g / "study.csv");
  EXPECT_EQ(study.rfind("delta,nodes,min_F,lp_error", 0), 0u);
  EXPECT_EQ(std::count(study.begin(), study.end(), '\n'), 5);
  const fs::path p = fresh_dir("poincare");
  ASSERT_EQ(run_cli("poincare " + cfg("poincare") + " --out " + p.string()), 0);
  const std::string pc = slurp(p / "poincare.csv");
  EXPECT_NE(pc.find("dirichlet"), std::string::npos);
  EXPECT_NE(pc.find("robin"), std::string::npos);
}
