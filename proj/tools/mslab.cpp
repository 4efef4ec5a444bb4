#include "mslab/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace cli = mslab::cli;

int main(int argc, char** argv) {
  CLI::App app{"Mullins-Sekerka interface laboratory"};
  app.require_subcommand(1);

  std::string config, out = "out";
  long long seed = -1;
  bool oracle = false;
  std::vector<double> resolutions;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "scenario JSON")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_flag("--oracle", oracle, "enable grid cross-checks");
  };
  auto* run = app.add_subcommand("run", "evolve one scenario");
  common(run);
  auto* stab = app.add_subcommand("stability", "weak-strong audit of two runs");
  common(stab);
  auto* conv = app.add_subcommand("converge", "self-convergence table");
  common(conv);
  conv->add_option("--resolutions", resolutions, "node counts, or time steps for flow_dt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::ConfigFailure;
  }

  auto apply = [&](cli::ScenarioConfig& s) {
    if (seed >= 0) s.seed = static_cast<unsigned>(seed);
    s.oracle = s.oracle || oracle;
  };

  try {
    if (*run) {
      auto c = cli::load_scenario(config);
      apply(c);
      return cli::cmd_run(c, out, std::cout);
    }
    if (*stab) {
      auto c = cli::load_stability(config);
      apply(c.weak);
      apply(c.strong);
      return cli::cmd_stability(c, out, std::cout);
    }
    auto c = cli::load_converge(config);
    apply(c.scenario);
    if (!resolutions.empty()) c.resolutions = resolutions;
    return cli::cmd_converge(c, out, std::cout);
  } catch (const mslab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::ConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return cli::SolverFailure;
  }
}
