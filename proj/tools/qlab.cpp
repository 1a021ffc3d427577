// qlab — spectral-Galerkin laboratory for the damped stochastic wave
// equation, its zero-mass limit, and the associated quasi-potential
// machinery. See README.md for the experiment catalogue.

#include <cstdint>
#include <string>

#include "CLI11.hpp"
#include "qlab/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qlab: stochastic damped wave / heat equation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;

  const char* names[] = {"sk-compare", "action-check", "minact",
                         "quasipotential-sweep", "exit-mc"};
  const char* blurbs[] = {
      "Couple wave and heat paths with common noise; tabulate sup deviations",
      "Verify action/energy identities (Gramian, dissipation, decomposition)",
      "Minimize the discrete action for one target; report gap to closed form",
      "Quasi-potential gap across a mu list plus the heat case",
      "Mean exit time Monte Carlo over a decreasing epsilon schedule"};
  for (int i = 0; i < 5; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], blurbs[i]);
    sub->add_option("--config", config_path, "configuration file")
        ->required();
    sub->add_option("--seed", seed, "override rng.seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads,
                    "worker threads for Monte Carlo loops (results are "
                    "independent of this)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  qlab::SuiteOptions opts;
  opts.subcommand = app.get_subcommands().front()->get_name();
  opts.config_path = config_path;
  opts.out_dir = out_dir;
  if (seed_given) opts.seed_override = seed;
  opts.n_threads = threads < 1 ? 1 : threads;
  return qlab::run_suite(opts);
}
