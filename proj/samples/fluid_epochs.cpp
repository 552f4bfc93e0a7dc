// Prints the fluid epochs for a three-class system where classes 2 and 3
// are subcritical: both drain to zero and class 1 absorbs their spare
// capacity until the state stops moving.

#include <iostream>

#include "gps/fluid.hpp"
#include "gps/io.hpp"

int main() {
  const gps::GpsWeights w({0.4, 0.3, 0.3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const gps::Vec gamma{0.6, 0.3, 0.1};
  gps::Vec nu(3);
  for (std::size_t j = 0; j < 3; ++j) nu[j] = gamma[j] - w.alpha(j);

  const auto rep = gps::subcritical_analysis(w, gamma);
  std::cout << "S = " << rep.S.to_string() << "\n";

  const auto f = gps::fluid_solve(w, gps::Vec{1.0, 1.0, 1.0}, nu, 20.0);
  std::cout << gps::io::to_csv(f);
  std::cout << "absorbed at t = " << gps::io::num(f.absorption_time) << "\n";
}
