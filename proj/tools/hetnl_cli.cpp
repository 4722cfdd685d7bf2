#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "hetnl/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App *cmd, Common &c, bool config_required) {
  auto *opt = cmd->add_option("--config", c.config, "TOML run configuration");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (default: [output].dir)");
  cmd->add_option("--seed", c.seed, "random seed (recorded in the outputs)");
  cmd->add_option("--threads", c.threads, "worker threads (0: hardware concurrency)")->check(CLI::NonNegativeNumber);
}

hetnl::RunConfig resolve(const Common &c) {
  hetnl::RunConfig cfg = c.config.empty() ? hetnl::preset_config("interval") : hetnl::load_config(c.config);
  if (c.seed) cfg.solver.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Heterogeneously localized nonlocal variational problems"};
  app.require_subcommand(1);
  Common verify, solve, study, poincare;
  auto *v = app.add_subcommand("verify", "run the invariant suites; writes verify.csv");
  add_common(v, verify, false);
  auto *s = app.add_subcommand("solve", "solve the configured problem; writes solution.csv and report.json");
  add_common(s, solve, true);
  auto *g = app.add_subcommand("gamma-study", "delta sweep against the local limit; writes study.csv");
  add_common(g, study, true);
  auto *p = app.add_subcommand("poincare", "Poincare constant estimates; writes poincare.csv");
  add_common(p, poincare, true);

  CLI11_PARSE(app, argc, argv);

  try {
    auto run = [](const Common &c, auto &&cmd) {
      if (c.threads > 0) hetnl::set_num_threads(c.threads);
      const hetnl::RunConfig cfg = resolve(c);
      return cmd(cfg, hetnl::fs::path(cfg.out_dir));
    };
    if (v->parsed()) return run(verify, hetnl::cmd_verify);
    if (s->parsed()) return run(solve, hetnl::cmd_solve);
    if (g->parsed()) return run(study, hetnl::cmd_gamma_study);
    if (p->parsed()) return run(poincare, hetnl::cmd_poincare);
  } catch (const hetnl::ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
