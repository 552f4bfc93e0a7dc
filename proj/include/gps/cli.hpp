#pragma once

// Command implementations behind gpsctl. Each command reads a scenario,
// writes its outputs into one directory and finishes with a manifest.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gps/diffusion.hpp"
#include "gps/fluid.hpp"
#include "gps/io.hpp"
#include "gps/monte_carlo.hpp"
#include "gps/scenario.hpp"
#include "gps/validate.hpp"

namespace gps::cli {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kPropertyFailure = 1, kConfigError = 2, kNumericFailure = 3 };

struct Options {
  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> grid;
  bool quiet = false;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"analyze", "fluid", "simulate", "diffuse", "compare", "validate"};
  return c;
}

namespace detail {

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Outputs {
 public:
  explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    io::write_atomic(dir_ / name, content);
    files_.push_back({{"file", name}, {"fnv1a", io::hex(io::fnv1a(content))}});
  }
  void write(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

  const nlohmann::json& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json files_ = nlohmann::json::array();
};

inline double ci_half(double var_a, std::size_t na, double var_b, std::size_t nb) {
  double v = 0.0;
  if (na > 0) v += var_a / static_cast<double>(na);
  if (nb > 0) v += var_b / static_cast<double>(nb);
  return 1.96 * std::sqrt(v);
}

inline nlohmann::json analyze_json(const Scenario& s) {
  const GpsWeights w = s.weights();
  const Vec g = s.rates();
  const auto rep = subcritical_analysis(w, g);
  nlohmann::json j = io::to_json(rep);
  j["gamma"] = g;
  j["heavy_traffic"] = std::abs(sum(g) - 1.0) <= kStateTol;
  j["critical_identities"] = verify_critical_identities(w, rep);
  return j;
}

inline FluidTrajectory fluid_of(const Scenario& s) {
  const GpsWeights w = s.weights();
  const Vec g = s.rates();
  Vec nu(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) nu[j] = g[j] - w.alpha(j);
  return fluid_solve(w, s.u0, nu, s.fluid_horizon);
}

/// Prelimit vs limit deltas with CI half-widths at every output time.
inline std::string compare_csv(const StatsTable& t) {
  std::string out = "level,time,series,prelimit_mean,limit_mean,delta,ci_half\n";
  if (!t.limit) return out;
  const LevelStats& lim = *t.limit;
  for (const auto& l : t.levels) {
    const std::string lv = io::level_name(l);
    auto series = [&](const SeriesStats& a, const SeriesStats& b, const char* name) {
      for (std::size_t k = 0; k < a.times.size(); ++k)
        for (std::size_t j = 0; j < a.mean[k].size(); ++j) {
          const double d = a.mean[k][j] - b.mean[k][j];
          out += lv + "," + io::num(a.times[k]) + "," + name + std::to_string(j + 1) + "," + io::num(a.mean[k][j]) +
                 "," + io::num(b.mean[k][j]) + "," + io::num(d) + "," +
                 io::num(ci_half(a.variance[k][j], l.replications, b.variance[k][j], lim.replications)) + "\n";
        }
    };
    series(l.U, lim.U, "U");
    series(l.T, lim.T, "T");
  }
  return out;
}

/// Collapse metric table: mean sup of the scaled workload for each class
/// in S at every level, with CI half-widths.
inline std::string collapse_csv(const StatsTable& t) {
  std::string out = "level,class,sup_mean,sup_sd,ci_half\n";
  auto emit = [&](const LevelStats& l) {
    for (auto j : t.S.members())
      out += io::level_name(l) + "," + std::to_string(j + 1) + "," + io::num(l.sup_U.mean[j]) + "," +
             io::num(l.sup_U.sd[j]) + "," +
             io::num(ci_half(l.sup_U.sd[j] * l.sup_U.sd[j], l.replications, 0.0, 0)) + "\n";
  };
  for (const auto& l : t.levels) emit(l);
  if (t.limit) emit(*t.limit);
  return out;
}

}  // namespace detail

/// Runs one command. Returns the process exit code; diagnostics go to err.
inline int run(const Options& opt, std::ostream& log, std::ostream& err) {
  const auto& cmds = commands();
  if (std::find(cmds.begin(), cmds.end(), opt.command) == cmds.end()) {
    err << "unknown command: " << opt.command << "\n";
    return kConfigError;
  }
  auto say = [&](const std::string& s) {
    if (!opt.quiet) log << s << "\n";
  };
  try {
    Scenario s;
    if (opt.command != "validate" || !opt.config.empty()) {
      if (opt.config.empty()) throw ConfigError({"--config is required"});
      s = load_scenario(opt.config);
    }
    if (opt.seed) s.seed = *opt.seed;
    if (opt.grid) {
      if (*opt.grid == 0) throw ConfigError({"--grid must be > 0"});
      s.grid = *opt.grid;
    }
    if (opt.out) s.output_dir = *opt.out;

    const std::string started = detail::utc_now();
    detail::Outputs out(s.output_dir);
    int code = kOk;

    if (opt.command == "analyze") {
      const auto report = detail::analyze_json(s);
      out.write("report.json", report);
      out.write("fluid.csv", io::to_csv(detail::fluid_of(s)));
      say("S = " + report["S"].dump() + ", kappa = " + report["kappa"].dump());
    } else if (opt.command == "fluid") {
      const auto f = detail::fluid_of(s);
      out.write("fluid.json", io::to_json(f));
      out.write("fluid.csv", io::to_csv(f));
      say("epochs: " + std::to_string(f.epochs.size()) + ", absorption time: " + io::num(f.absorption_time));
    } else if (opt.command == "simulate") {
      auto cfg = s.monte_carlo_config();
      cfg.limit_replications = 0;
      const auto table = monte_carlo(cfg);
      out.write("stats.csv", io::stats_csv(table));
      out.write("metrics.csv", io::metrics_csv(table));
      out.write("summary.json", io::summary_json(table));
      say("simulated " + std::to_string(table.levels.size()) + " levels, S = " + table.S.to_string());
    } else if (opt.command == "diffuse") {
      s.require_heavy_traffic();
      if (s.limit_replications == 0) throw ConfigError({"limit_replications must be > 0"});
      const GpsWeights w = s.weights();
      const Vec g = s.rates();
      const DiffusionConfig dcfg = s.diffusion_config();
      StatsTable table;
      table.S = subcritical_analysis(w, g).S;
      table.limit = simulate_limit(w, g, dcfg, s.limit_replications, s.grid, s.threads);
      const auto path = limit_process(w, g, dcfg, 0);
      out.write("limit_stats.csv", io::stats_csv(table));
      out.write("limit_metrics.csv", io::metrics_csv(table));
      out.write("limit_path_U.csv", io::to_csv(path.U, "U"));
      out.write("limit_path_T.csv", io::to_csv(path.T, "T"));
      out.write("summary.json", io::summary_json(table));
      say("limit process: " + std::to_string(s.limit_replications) + " paths, S = " + table.S.to_string());
    } else if (opt.command == "compare") {
      s.require_heavy_traffic();
      auto cfg = s.monte_carlo_config();
      if (cfg.limit_replications == 0) throw ConfigError({"limit_replications must be > 0"});
      const auto table = monte_carlo(cfg);
      out.write("stats.csv", io::stats_csv(table));
      out.write("metrics.csv", io::metrics_csv(table));
      out.write("compare.csv", detail::compare_csv(table));
      out.write("collapse.csv", detail::collapse_csv(table));
      out.write("summary.json", io::summary_json(table));
      say("compared " + std::to_string(table.levels.size()) + " levels with the limit, S = " + table.S.to_string());
    } else {
      const auto results = run_property_battery(s.seed);
      std::string csv = "property,result,detail\n";
      for (const auto& r : results) {
        csv += "\"" + r.name + "\"," + (r.pass ? "pass" : "fail") + ",\"" + r.detail + "\"\n";
        say(std::string(r.pass ? "PASS  " : "FAIL  ") + r.name + (r.detail.empty() ? "" : "  (" + r.detail + ")"));
        if (!r.pass) code = kPropertyFailure;
      }
      out.write("validate.csv", csv);
    }

    nlohmann::json manifest;
    manifest["tool"] = "gpsctl";
    manifest["version"] = kToolVersion;
    manifest["command"] = opt.command;
    manifest["config"] = to_json(s);
    // The hash identifies the computation, so the output location is left out.
    nlohmann::json hashed = manifest["config"];
    hashed.erase("output_dir");
    manifest["config_hash"] = io::hex(io::fnv1a(hashed.dump()));
    manifest["seed"] = s.seed;
    manifest["started"] = started;
    manifest["finished"] = detail::utc_now();
    manifest["outputs"] = out.files();
    io::write_atomic(out.dir() / "manifest.json", manifest.dump(2) + "\n");
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const InfeasibleError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericFailure;
  }
}

}  // namespace gps::cli
