#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gps/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"GPS workload analysis, simulation and heavy-traffic limits"};
  app.require_subcommand(1, 1);

  gps::cli::Options opt;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t grid = 0;

  for (const auto& name : gps::cli::commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "scenario JSON (or a run manifest)");
    sub->add_option("--seed", seed, "override the scenario seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--grid", grid, "output points per unit of scaled time");
    sub->add_flag("--quiet", opt.quiet, "suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return gps::cli::kConfigError;
  }

  auto* sub = app.get_subcommands().front();
  opt.command = sub->get_name();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--out")) opt.out = out;
  if (sub->count("--grid")) opt.grid = grid;
  return gps::cli::run(opt, std::cout, std::cerr);
}
