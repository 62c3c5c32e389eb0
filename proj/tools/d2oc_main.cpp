#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "d2oc/cli_bench.hpp"

int main(int argc, char** argv) {
  CLI::App app{"density-driven coverage control: simulator and benchmarks"};
  app.require_subcommand(1);

  d2oc::CliOptions opts;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string backend;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", opts.out_dir, "output directory")
        ->capture_default_str();
    sub->add_option("--seed", seed, "override the experiment seed");
    sub->add_flag("--parallel", opts.parallel,
                  "fan out per-agent solves across threads");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run the coverage mission");
  sim->add_option("config", config_path, "experiment config file")->required();
  sim->add_option("--backend", backend,
                  "solver backend (full_kkt, condensed, condensed_stable)");
  add_common(sim);

  CLI::App* bench =
      app.add_subcommand("bench", "horizon sweep of per-solve wall clock");
  bench->add_option("config", config_path, "experiment config file")->required();
  add_common(bench);

  CLI::App* verify =
      app.add_subcommand("verify", "run the cross-module equivalence checks");
  verify->add_option("--out", opts.out_dir, "output directory")
      ->capture_default_str();
  verify->add_option("--inject-h-perturb", opts.inject_h_perturb,
                     "test hook: relative perturbation of the condensed Hessian");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      if (sim->count("--seed") > 0) opts.seed = seed;
      if (!backend.empty()) opts.backend = backend;
      return d2oc::cmd_simulate(config_path, opts);
    }
    if (bench->parsed()) {
      if (bench->count("--seed") > 0) opts.seed = seed;
      return d2oc::cmd_bench(config_path, opts);
    }
    return d2oc::cmd_verify(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
