// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
//
//   acceptance <path-to-gpsctl> <samples-dir>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <thread>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "gps/io.hpp"
#include "gps/monte_carlo.hpp"
#include "gps/reduction.hpp"
#include "gps/simulate.hpp"

using namespace gps;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  Outcome o{false, ""};
  const auto t0 = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::ostringstream line;
  line << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << title << "  [" << o.detail << "; "
       << io::num(std::round(seconds_since(t0) * 1000.0) / 1000.0) << " s]";
  std::cout << line.str() << std::endl;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

const GpsWeights kThirds({0.4, 0.3, 0.3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
const Vec kGamma{0.6, 0.3, 0.1};

ArrivalModel acceptance_model() {
  ArrivalModel m;
  for (double g : kGamma) m.classes.push_back({DistKind::exponential, g, Distribution::exponential(1.0)});
  m.c_hat = Vec(3, 0.0);
  return m;
}

// Random inputs shared by criteria 1 and 2.
struct RandomCase {
  GpsWeights w;
  Vec x;
};

std::vector<RandomCase> random_cases(std::size_t count) {
  testgen::Gen g(1001);
  std::vector<RandomCase> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t J = g.index(2, 6);
    GpsWeights w(g.simplex(J), g.simplex(J));
    out.push_back({std::move(w), g.vec(J, -2.0, 2.0)});
  }
  return out;
}

double aggregate_reflection(const StepPath& H, double x0, double t) {
  double arrived = 0.0, low = std::min(0.0, x0);
  for (const auto& j : H.jumps()) {
    if (j.t > t) break;
    low = std::min(low, x0 + arrived - j.t);
    arrived += sum(j.dv);
  }
  const double xt = x0 + arrived - t;
  return xt - std::min(low, xt);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <gpsctl> <samples-dir>\n";
    return 2;
  }
  const std::string tool = argv[1];
  const fs::path samples = argv[2];

  const auto cases = random_cases(10000);

  report(1, "projection equals brute force on 1e4 random inputs", [&] {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (const auto& c : cases) worst = std::max(worst, sup_distance(project(c.w, c.x), project_bruteforce(c.w, c.x)));
    const double secs = seconds_since(t0);
    return Outcome{worst <= 1e-12 && secs < 10.0, "max diff " + fmt(worst) + ", " + fmt(secs) + " s"};
  });

  report(2, "subcritical set routes agree when sum(nu) >= 0", [&] {
    std::size_t compared = 0, mismatched = 0;
    for (const auto& c : cases) {
      if (sum(c.x) < 0.0) continue;
      ++compared;
      if (subcritical_from_drift(c.w, c.x).S != subcritical_set_by_rates(c.w, c.x)) ++mismatched;
    }
    return Outcome{mismatched == 0 && compared > 0,
                   std::to_string(compared) + " compared, " + std::to_string(mismatched) + " mismatches"};
  });

  report(3, "fluid hand case", [&] {
    Vec nu(3);
    for (std::size_t j = 0; j < 3; ++j) nu[j] = kGamma[j] - kThirds.alpha(j);
    const Vec u0{1.0, 1.0, 1.0};
    const auto t0 = Clock::now();
    const auto f = fluid_solve(kThirds, u0, nu, 20.0);
    const double secs = seconds_since(t0);
    bool ok = f.epochs.size() == 3;
    const std::vector<double> times{0.0, 5.0, 15.0};
    const std::vector<Vec> states{{1, 1, 1}, {2, 1, 0}, {3, 0, 0}};
    for (std::size_t k = 0; ok && k < 3; ++k)
      ok = std::abs(f.epochs[k].t - times[k]) <= 1e-9 && sup_distance(f.epochs[k].u, states[k]) <= 1e-9;
    ok = ok && max_abs(f.kappa) <= 1e-9 && std::abs(f.absorption_time - 15.0) <= 1e-9 && secs < 1e-3;
    return Outcome{ok, std::to_string(f.epochs.size()) + " epochs, absorption " + fmt(f.absorption_time) + ", " +
                           fmt(secs * 1e6) + " us"};
  });

  report(4, "comparison principle on 1e3 path pairs", [&] {
    testgen::Gen g(1004);
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const std::size_t J = g.index(2, 6);
      const auto w = g.weights(J);
      const StepPath base = g.step_path(J, g.index(0, 30), -1.0, 1.0);
      const StepPath bump = g.increasing_path(J, g.index(0, 30), 0.5);
      const StepPath lo = sm_step(w, base), hi = sm_step(w, base + bump);
      for (double t : hi.times()) {
        const Vec a = lo.value_at(t), b = hi.value_at(t);
        for (std::size_t i = 0; i < J; ++i) worst = std::max(worst, a[i] - b[i]);
      }
    }
    const double secs = seconds_since(t0);
    return Outcome{worst <= 1e-12 && secs < 10.0, "max violation " + fmt(worst) + ", " + fmt(secs) + " s"};
  });

  report(5, "total workload equals the reflected aggregate netput", [&] {
    testgen::Gen g(1005);
    const DistKind kinds[] = {DistKind::exponential, DistKind::deterministic, DistKind::uniform};
    double worst = 0.0;
    for (int r = 0; r < 100; ++r) {
      const std::size_t J = g.index(2, 5);
      const auto w = g.weights(J);
      ArrivalModel m;
      const Vec gamma = g.simplex(J);
      const double load = g.uniform(0.7, 1.2);
      for (std::size_t j = 0; j < J; ++j) {
        Distribution work = Distribution::exponential(1.0);
        if (r % 3 == 1) work = Distribution::uniform(0.0, 2.0);
        if (r % 3 == 2) work = Distribution::deterministic(1.0);
        m.classes.push_back({kinds[(r + j) % 3], load * gamma[j], work});
      }
      const double n = 200.0;
      const StepPath H = gen_arrivals(m, n, 1.0, 55, static_cast<std::uint64_t>(r));
      const Vec U0 = g.vec(J, 0.0, 3.0);
      const auto run = gps_simulate(w, U0, H, n);
      for (std::size_t k = 0; k <= 256; ++k) {
        const double t = n * static_cast<double>(k) / 256.0;
        worst = std::max(worst, std::abs(sum(run.U.value_at(t)) - aggregate_reflection(H, sum(U0), t)));
      }
    }
    return Outcome{worst <= 1e-9, "max diff " + fmt(worst) + " over 100 runs"};
  });

  report(6, "reduced and restricted reflections agree on face-respecting paths", [&] {
    testgen::Gen g(1006);
    const std::vector<std::pair<std::size_t, ClassSet>> configs{{3, ClassSet{2}}, {3, ClassSet{1, 2}}, {4, ClassSet{2, 3}}};
    double worst = 0.0;
    std::size_t invalid = 0;
    for (const auto& [J, S] : configs) {
      for (int k = 0; k < 100; ++k) {
        const auto w = g.weights(J);
        Vec init = g.vec(J, 0.0, 1.0);
        for (auto j : S.members()) init[j] = 0.0;
        StepPath psi(J, init, 1.0);
        for (double t : g.times(40, 1.0)) {
          Vec dv = g.vec(J, -1.0, 1.0);
          for (auto j : S.members()) dv[j] = 0.0;
          psi.add_jump(t, dv);
        }
        const auto rep = reduced_sm_equiv_check(w, S, psi);
        if (!rep.window_valid) ++invalid;
        worst = std::max(worst, rep.max_error);
      }
    }
    return Outcome{worst <= 1e-9 && invalid == 0,
                   "max diff " + fmt(worst) + ", " + std::to_string(invalid) + " invalid windows"};
  });

  report(7, "oscillation demo coefficients", [&] {
    bool ok = true;
    double worst_ratio = 0.0;
    for (int n = 1; n <= 10; ++n) {
      const auto d = oscillation_demo(n);
      const double want = std::ldexp(1.0, n - 1) / n;
      ok = ok && d.xi[0] == want && d.xi[1] == want;
      const double bound = std::sqrt(2.0) / n;
      worst_ratio = std::max(worst_ratio, d.sup_norm / bound);
      ok = ok && d.sup_norm <= bound * (1.0 + 1e-15);
    }
    return Outcome{ok, "xi exact for n = 1..10, max sup/bound " + fmt(worst_ratio)};
  });

  // Criteria 8 and 10 share one Monte Carlo run.
  MonteCarloConfig mc;
  mc.weights = kThirds;
  mc.model = acceptance_model();
  mc.grid = 4;
  mc.n_list = {1e2, 1e3, 1e4};
  mc.replications = 20000;
  mc.seed = 8;
  mc.threads = std::max(1U, std::thread::hardware_concurrency());
  std::optional<StatsTable> table;
  auto collapse_table = [&]() -> const StatsTable& {
    if (!table) table = monte_carlo(mc);
    return *table;
  };

  report(8, "collapse metric falls by a factor >= 1.5 per decade of n", [&] {
    const auto& t = collapse_table();
    bool ok = t.S == ClassSet{1, 2};
    std::string detail = "S = " + t.S.to_string();
    for (std::size_t j : {1, 2}) {
      detail += "; class " + std::to_string(j + 1) + ":";
      for (std::size_t k = 0; k < t.levels.size(); ++k) {
        const double m = t.levels[k].sup_U.mean[j];
        detail += " " + fmt(m);
        if (k > 0) {
          const double prev = t.levels[k - 1].sup_U.mean[j];
          detail += " (x" + fmt(prev / m) + ")";
          ok = ok && m < prev && prev >= 1.5 * m;
        }
      }
    }
    return Outcome{ok, detail};
  });

  report(9, "marginal of the critical class matches the half-normal mean", [&] {
    const double target = std::sqrt(6.0 / M_PI);
    MonteCarloConfig cfg;
    cfg.weights = kThirds;
    cfg.model = acceptance_model().rescaled_to_aggregate_variance(3.0);
    cfg.grid = 4;
    cfg.n_list = {1e4};
    cfg.replications = 20000;
    cfg.seed = 9;
    cfg.crushing = false;
    cfg.threads = mc.threads;
    cfg.limit_replications = 20000;
    cfg.limit_step = 1.0 / 16384.0;
    const auto t = monte_carlo(cfg);
    const double pre = t.levels.front().U.mean.back()[0];
    const double lim = t.limit->U.mean.back()[0];
    const double e_pre = std::abs(pre / target - 1.0), e_lim = std::abs(lim / target - 1.0);
    return Outcome{e_pre <= 0.05 && e_lim <= 0.02, "target " + fmt(target) + ", n=1e4 mean " + fmt(pre) + " (" +
                                                       fmt(100 * e_pre) + "%), limit mean " + fmt(lim) + " (" +
                                                       fmt(100 * e_lim) + "%)"};
  });

  report(10, "crushing metric decreases in n", [&] {
    const auto& t = collapse_table();
    bool ok = !t.S.empty();
    std::string detail;
    for (auto j : t.S.members()) {
      detail += (detail.empty() ? "" : "; ") + std::string("class ") + std::to_string(j + 1) + ":";
      for (std::size_t k = 0; k < t.levels.size(); ++k) {
        if (!t.levels[k].crushing) return Outcome{false, "no crushing metric"};
        const double m = t.levels[k].crushing->mean[j];
        detail += " " + fmt(m);
        if (k > 0) ok = ok && m < t.levels[k - 1].crushing->mean[j];
      }
    }
    return Outcome{ok, detail};
  });

  report(11, "every CLI command reproduces its outputs", [&] {
    const fs::path root = fs::temp_directory_path() / ("gps_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string cfg = (samples / "quick.json").string();
    std::string detail;
    bool ok = true;
    std::size_t files = 0;
    // Both runs use the same command line, so only the manifest timestamps may differ.
    auto snapshot = [](const fs::path& dir) {
      std::map<std::string, std::string> out;
      for (const auto& entry : fs::directory_iterator(dir)) {
        std::string text = slurp(entry.path());
        if (entry.path().filename() == "manifest.json") {
          auto j = nlohmann::json::parse(text);
          j.erase("started");
          j.erase("finished");
          text = j.dump();
        }
        out[entry.path().filename().string()] = std::move(text);
      }
      return out;
    };
    for (const std::string cmd : {"analyze", "fluid", "simulate", "diffuse", "compare", "validate"}) {
      const fs::path dir = root / cmd;
      const std::string line = tool + " " + cmd + " --config " + cfg + " --out " + dir.string() + " --quiet";
      std::vector<std::map<std::string, std::string>> runs;
      for (int run = 0; run < 2; ++run) {
        const int status = std::system(line.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
          ok = false;
          detail += cmd + " exited abnormally; ";
        }
        runs.push_back(snapshot(dir));
      }
      files += runs[0].size();
      if (runs[0].size() < 2 || runs[0] != runs[1]) {
        ok = false;
        detail += cmd + " outputs differ; ";
      }
    }
    fs::remove_all(root);
    return Outcome{ok, detail + std::to_string(files) + " files compared"};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
