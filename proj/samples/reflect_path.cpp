// Reflects a two-class step path given as JSON on stdin (or a built-in
// example) and prints the input and output as CSV.
//
//   {"dim": 2, "initial": [1, 1], "horizon": 2, "jumps": [{"t": 0.5, "dv": [-2, 0.5]}]}

#include <iostream>
#include <iterator>
#include <string>

#include "gps/io.hpp"
#include "gps/skorokhod.hpp"

int main(int argc, char** argv) {
  gps::StepPath psi(2, {1.0, 1.0}, 2.0);
  if (argc > 1 && std::string(argv[1]) == "-") {
    const std::string text{std::istreambuf_iterator<char>(std::cin), {}};
    psi = gps::io::step_path_from_json(nlohmann::json::parse(text));
  } else {
    psi.add_jump(0.5, {-2.0, 0.5});
    psi.add_jump(1.0, {0.0, -3.0});
    psi.add_jump(1.5, {1.0, 1.0});
  }
  const gps::GpsWeights w({0.5, 0.5}, {0.3, 0.7});
  const gps::StepPath phi = gps::sm_step(w, psi);

  std::cout << "# input\n" << gps::io::to_csv(psi) << "# reflected\n" << gps::io::to_csv(phi);
  const auto check = gps::validate_sp(w, psi, phi);
  std::cout << "# Skorokhod conditions " << (check.ok() ? "hold" : "violated") << "\n";
  return check.ok() ? 0 : 1;
}
