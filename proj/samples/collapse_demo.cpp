// Small Monte Carlo showing the scaled workload of the subcritical classes
// shrinking as n grows, while the critical class keeps its fluctuations.

#include <iostream>

#include "gps/io.hpp"
#include "gps/monte_carlo.hpp"

int main(int argc, char** argv) {
  gps::MonteCarloConfig cfg;
  cfg.weights = gps::GpsWeights({0.4, 0.3, 0.3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  for (double g : {0.6, 0.3, 0.1}) cfg.model.classes.push_back({gps::DistKind::exponential, g, gps::Distribution::exponential(1.0)});
  cfg.grid = 16;
  cfg.n_list = {100, 1000, 10000};
  cfg.replications = argc > 1 ? std::stoul(argv[1]) : 500;
  cfg.seed = 1;

  const auto table = gps::monte_carlo(cfg);
  std::cout << "S = " << table.S.to_string() << "\n" << gps::io::metrics_csv(table);
}
