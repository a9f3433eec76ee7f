#include <iostream>

#include <CLI11.hpp>

#include "wongreduce/cli.hpp"

int main(int argc, char** argv) {
  namespace wc = wongreduce::cli;
  CLI::App app{"Symmetry reduction, Wong dynamics and Coulomb-gauge lattice experiments"};
  app.set_version_flag("--version", wc::kToolVersion);
  app.require_subcommand(1);
  wc::RunRequest req;
  std::string out;
  std::uint64_t seed = 0;
  for (const char* name : {"geometry", "integrate", "equilibria", "lattice-geometry", "lattice-integrate",
                           "lattice-equilibria", "report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", req.config_path, "JSON config or run manifest")->required();
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : wc::kFailure;
  }
  CLI::App* chosen = app.get_subcommands().front();
  req.subcommand = chosen->get_name();
  if (chosen->count("--out")) req.out_dir = out;
  if (chosen->count("--seed")) req.seed = seed;
  return wc::run(req, std::cerr);
}
