#pragma once

// JSON and CSV serialization of paths, fluid trajectories, reports and
// Monte Carlo statistics. Numbers are written in shortest round-trip form
// so reruns are byte-identical.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include <nlohmann/json.hpp>

#include "gps/fluid.hpp"
#include "gps/monte_carlo.hpp"
#include "gps/skorokhod.hpp"
#include "gps/types.hpp"

namespace gps::io {

using nlohmann::json;

inline std::string num(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline json labels(ClassSet s) {
  json a = json::array();
  for (auto m : s.members()) a.push_back(m + 1);
  return a;
}

// ---- step paths ----

inline json to_json(const StepPath& p) {
  json jumps = json::array();
  for (const auto& j : p.jumps()) jumps.push_back({{"t", j.t}, {"dv", j.dv}});
  return {{"dim", p.dim()}, {"horizon", p.horizon()}, {"initial", p.initial()}, {"jumps", jumps}};
}

inline StepPath step_path_from_json(const json& j) {
  StepPath p(j.at("dim").get<std::size_t>(), j.at("initial").get<Vec>(), j.at("horizon").get<double>());
  for (const auto& r : j.at("jumps")) p.add_jump(r.at("t").get<double>(), r.at("dv").get<Vec>());
  return p;
}

/// One row per breakpoint: t, v1..vJ (value right after the jump).
inline std::string to_csv(const StepPath& p) {
  std::string out = "t";
  for (std::size_t i = 0; i < p.dim(); ++i) out += ",v" + std::to_string(i + 1);
  out += '\n';
  const auto ts = p.times();
  const auto vs = p.values();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    out += num(ts[k]);
    for (double v : vs[k]) out += "," + num(v);
    out += '\n';
  }
  return out;
}

inline std::string to_csv(const GridPath& p, const std::string& prefix = "v") {
  std::string out = "t";
  for (std::size_t i = 0; i < p.dim; ++i) out += "," + prefix + std::to_string(i + 1);
  out += '\n';
  for (std::size_t k = 0; k < p.points(); ++k) {
    out += num(p.time(k));
    for (double v : p.row(k)) out += "," + num(v);
    out += '\n';
  }
  return out;
}

// ---- fluid ----

inline json to_json(const FluidTrajectory& f) {
  json epochs = json::array();
  for (const auto& e : f.epochs) epochs.push_back({{"t", e.t}, {"u", e.u}, {"chi", e.chi}, {"empty", labels(e.empty)}});
  json j = {{"epochs", epochs}, {"kappa", f.kappa}, {"horizon", f.horizon}};
  j["absorption_time"] = std::isfinite(f.absorption_time) ? json(f.absorption_time) : json(nullptr);
  return j;
}

/// Breakpoint table: t, u1..uJ, chi1..chiJ; a final row gives the state at the horizon.
inline std::string to_csv(const FluidTrajectory& f) {
  const std::size_t J = f.kappa.size();
  std::string out = "t";
  for (std::size_t i = 0; i < J; ++i) out += ",u" + std::to_string(i + 1);
  for (std::size_t i = 0; i < J; ++i) out += ",chi" + std::to_string(i + 1);
  out += '\n';
  auto row = [&](double t, const Vec& u, const Vec& chi) {
    out += num(t);
    for (double v : u) out += "," + num(v);
    for (double v : chi) out += "," + num(v);
    out += '\n';
  };
  for (const auto& e : f.epochs) row(e.t, e.u, e.chi);
  if (!f.epochs.empty() && f.epochs.back().t < f.horizon) row(f.horizon, f.state_at(f.horizon), f.kappa);
  return out;
}

inline json to_json(const ConeDecomposition& d) {
  return {{"theta", d.theta}, {"active", labels(d.active)}, {"sigma", d.sigma}};
}

inline json to_json(const SubcriticalReport& r) {
  json j = {{"nu", r.nu},
            {"S", labels(r.S)},
            {"M_free", labels(r.M_free)},
            {"kappa", r.kappa},
            {"theta", to_json(r.theta)}};
  j["r_S"] = r.r_S ? json(*r.r_S) : json(nullptr);
  return j;
}

// ---- Monte Carlo statistics ----

inline std::string level_name(const LevelStats& l) {
  if (l.is_limit()) return "limit";
  std::ostringstream os;
  os << "n" << l.n;
  return os.str();
}

/// Long format: time, series, aggregate, value. Series names carry the
/// level, e.g. "n100.U2" or "limit.T1"; covariances use "n100.U1.U2".
inline std::string stats_csv(const StatsTable& table) {
  std::string out = "time,series,aggregate,value\n";
  auto emit = [&](const LevelStats& l) {
    const std::string lv = level_name(l);
    auto series = [&](const SeriesStats& s, const char* name) {
      for (std::size_t k = 0; k < s.times.size(); ++k) {
        const std::string t = num(s.times[k]);
        const std::size_t J = s.mean[k].size();
        for (std::size_t i = 0; i < J; ++i) {
          const std::string base = lv + "." + name + std::to_string(i + 1);
          out += t + "," + base + ",mean," + num(s.mean[k][i]) + "\n";
          out += t + "," + base + ",variance," + num(s.variance[k][i]) + "\n";
          for (std::size_t m = i + 1; m < J; ++m)
            out += t + "," + base + "." + name + std::to_string(m + 1) + ",covariance," +
                   num(s.covariance[k][i][m]) + "\n";
        }
      }
    };
    series(l.U, "U");
    series(l.T, "T");
  };
  for (const auto& l : table.levels) emit(l);
  if (table.limit) emit(*table.limit);
  return out;
}

/// Per-level sup metrics: level, class, metric, mean, sd, replications.
inline std::string metrics_csv(const StatsTable& table) {
  std::string out = "level,class,metric,mean,sd,replications\n";
  auto emit = [&](const LevelStats& l) {
    const std::string lv = level_name(l);
    const std::string reps = std::to_string(l.replications);
    for (std::size_t j = 0; j < l.sup_U.mean.size(); ++j) {
      out += lv + "," + std::to_string(j + 1) + ",sup_U," + num(l.sup_U.mean[j]) + "," + num(l.sup_U.sd[j]) + "," +
             reps + "\n";
      if (l.crushing && table.S.contains(j))
        out += lv + "," + std::to_string(j + 1) + ",crushing," + num(l.crushing->mean[j]) + "," +
               num(l.crushing->sd[j]) + "," + reps + "\n";
    }
  };
  for (const auto& l : table.levels) emit(l);
  if (table.limit) emit(*table.limit);
  return out;
}

inline json summary_json(const StatsTable& table) {
  json levels = json::array();
  auto emit = [&](const LevelStats& l) {
    json j = {{"level", level_name(l)},
              {"replications", l.replications},
              {"U_mean_at_horizon", l.U.mean.back()},
              {"U_variance_at_horizon", l.U.variance.back()},
              {"T_mean_at_horizon", l.T.mean.back()},
              {"sup_U_mean", l.sup_U.mean},
              {"sup_U_sd", l.sup_U.sd}};
    if (!l.is_limit()) j["n"] = l.n;
    if (table.S.empty())
      j["collapse_metric"] = "n/a";
    else {
      json c = json::object();
      for (auto s : table.S.members()) c[std::to_string(s + 1)] = l.sup_U.mean[s];
      j["collapse_metric"] = c;
    }
    if (l.crushing) {
      json c = json::object();
      for (auto s : table.S.members()) c[std::to_string(s + 1)] = l.crushing->mean[s];
      j["crushing_metric"] = c;
    }
    levels.push_back(j);
  };
  for (const auto& l : table.levels) emit(l);
  if (table.limit) emit(*table.limit);
  return {{"S", labels(table.S)}, {"levels", levels}};
}

}  // namespace gps::io
