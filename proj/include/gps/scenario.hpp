#pragma once

// Scenario configuration: a single JSON document shared by all commands.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gps/diffusion.hpp"
#include "gps/geometry.hpp"
#include "gps/monte_carlo.hpp"
#include "gps/simulate.hpp"
#include "gps/types.hpp"

namespace gps {

/// Invalid configuration; carries every diagnostic found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s;
    for (const auto& x : p) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
  std::vector<std::string> problems_;
};

struct Scenario {
  Vec alpha, beta;
  std::optional<Vec> gamma;      // explicit rates (analysis only)
  std::optional<ArrivalModel> model;
  Vec c_hat;
  std::optional<Matrix> M_H;
  std::optional<double> aggregate_variance;  // rescales the arrival model
  Vec u0;       // fluid initial state
  Vec u_hat;    // diffusion-scale initial state
  double horizon = 1.0;
  double fluid_horizon = 20.0;
  std::size_t grid = 256;
  std::vector<double> n_list{100, 1000, 10000};
  std::size_t replications = 1000;
  std::size_t limit_replications = 1000;
  double limit_step = 1.0 / 4096.0;
  std::uint64_t seed = 1;
  double eps_exponent = 0.25;
  unsigned threads = 1;
  std::string output_dir = "out";

  std::size_t size() const { return alpha.size(); }
  GpsWeights weights() const { return GpsWeights(alpha, beta); }

  Vec rates() const {
    if (gamma) return *gamma;
    return arrival_model().gamma();
  }

  ArrivalModel arrival_model() const {
    if (!model) throw ConfigError({"scenario has no \"arrivals\" section"});
    ArrivalModel m = *model;
    m.c_hat = c_hat.empty() ? Vec(size(), 0.0) : c_hat;
    if (aggregate_variance) m = m.rescaled_to_aggregate_variance(*aggregate_variance);
    return m;
  }

  /// Heavy traffic: total arrival rate equals capacity.
  void require_heavy_traffic() const {
    const double s = sum(rates());
    if (std::abs(s - 1.0) > kStateTol)
      throw ConfigError({"heavy traffic requires sum(gamma) = 1 within 1e-9, got " + std::to_string(s)});
  }

  /// Limit-process inputs; the covariance defaults to the arrival model's.
  DiffusionConfig diffusion_config() const {
    DiffusionConfig d;
    if (M_H) d.M_H = *M_H;
    else d.M_H = arrival_model().covariance();
    d.c_hat = c_hat.empty() ? Vec(size(), 0.0) : c_hat;
    d.u_hat = u_hat.empty() ? Vec(size(), 0.0) : u_hat;
    d.step = limit_step;
    d.horizon = horizon;
    d.seed = seed;
    return d;
  }

  MonteCarloConfig monte_carlo_config() const {
    MonteCarloConfig c;
    c.weights = weights();
    c.model = arrival_model();
    c.u_hat = u_hat;
    c.horizon = horizon;
    c.grid = grid;
    c.n_list = n_list;
    c.replications = replications;
    c.seed = seed;
    c.eps_exponent = eps_exponent;
    c.threads = threads;
    c.limit_replications = limit_replications;
    c.limit_step = limit_step;
    c.M_H = M_H;
    return c;
  }
};

namespace detail {

inline const char* kind_name(DistKind k) {
  switch (k) {
    case DistKind::exponential: return "exponential";
    case DistKind::deterministic: return "deterministic";
    case DistKind::uniform: return "uniform";
  }
  return "exponential";
}

inline std::optional<DistKind> parse_kind(const std::string& s) {
  if (s == "exponential") return DistKind::exponential;
  if (s == "deterministic") return DistKind::deterministic;
  if (s == "uniform") return DistKind::uniform;
  return std::nullopt;
}

class Reader {
 public:
  explicit Reader(const nlohmann::json& j) : j_(j) {}
  std::vector<std::string> problems;

  template <class T>
  std::optional<T> get(const nlohmann::json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) return std::nullopt;
    try {
      return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      problems.push_back(where + key + ": wrong type");
      return std::nullopt;
    }
  }

  template <class T>
  void opt(const std::string& key, T& into) {
    if (auto v = get<T>(j_, key, "")) into = *v;
  }

  const nlohmann::json& root() const { return j_; }

 private:
  const nlohmann::json& j_;
};

inline std::optional<Distribution> parse_work(Reader& r, const nlohmann::json& w, const std::string& where) {
  if (!w.is_object()) {
    r.problems.push_back(where + "work: expected an object");
    return std::nullopt;
  }
  const auto kind = parse_kind(w.value("kind", std::string("exponential")));
  if (!kind) {
    r.problems.push_back(where + "work.kind: expected exponential, deterministic or uniform");
    return std::nullopt;
  }
  Distribution d;
  if (*kind == DistKind::uniform) {
    auto lo = r.get<double>(w, "a", where + "work.");
    auto hi = r.get<double>(w, "b", where + "work.");
    if (!lo || !hi) {
      r.problems.push_back(where + "work: uniform needs \"a\" and \"b\"");
      return std::nullopt;
    }
    d = Distribution::uniform(*lo, *hi);
  } else {
    auto m = r.get<double>(w, "mean", where + "work.");
    if (!m) {
      r.problems.push_back(where + "work: needs \"mean\"");
      return std::nullopt;
    }
    d = *kind == DistKind::exponential ? Distribution::exponential(*m) : Distribution::deterministic(*m);
  }
  try {
    d.validate(where + "work");
  } catch (const std::exception& e) {
    r.problems.push_back(e.what());
    return std::nullopt;
  }
  return d;
}

}  // namespace detail

inline nlohmann::json to_json(const ArrivalModel& m) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& c : m.classes) {
    nlohmann::json w = {{"kind", detail::kind_name(c.work.kind)}};
    if (c.work.kind == DistKind::uniform) {
      w["a"] = c.work.lo;
      w["b"] = c.work.hi;
    } else {
      w["mean"] = c.work.lo;
    }
    a.push_back({{"interarrival", detail::kind_name(c.interarrival)}, {"rate", c.rate}, {"work", w}});
  }
  return a;
}

/// Parses and validates a scenario. A run manifest (an object with a
/// "config" member) is accepted in place of a scenario.
inline Scenario parse_scenario(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError({"config must be a JSON object"});
  const nlohmann::json& j = doc.contains("config") && doc.contains("command") ? doc.at("config") : doc;
  detail::Reader r(j);
  Scenario s;

  if (!j.contains("weights") || !j.at("weights").is_object()) {
    r.problems.push_back("weights: required object with alpha and beta");
  } else {
    const auto& w = j.at("weights");
    if (auto a = r.get<Vec>(w, "alpha", "weights.")) s.alpha = *a;
    else r.problems.push_back("weights.alpha: required");
    if (auto b = r.get<Vec>(w, "beta", "weights.")) s.beta = *b;
    else r.problems.push_back("weights.beta: required");
  }
  s.gamma = r.get<Vec>(j, "gamma", "");
  if (j.contains("arrivals")) {
    if (!j.at("arrivals").is_array()) {
      r.problems.push_back("arrivals: expected an array");
    } else {
      ArrivalModel m;
      std::size_t idx = 0;
      for (const auto& c : j.at("arrivals")) {
        const std::string where = "arrivals[" + std::to_string(++idx) + "].";
        ClassArrivals ca;
        const auto kind = detail::parse_kind(c.value("interarrival", std::string("exponential")));
        if (!kind) r.problems.push_back(where + "interarrival: expected exponential, deterministic or uniform");
        else ca.interarrival = *kind;
        auto rate = r.get<double>(c, "rate", where);
        if (!rate || !(*rate > 0.0) || !std::isfinite(*rate)) r.problems.push_back(where + "rate: must be > 0");
        else ca.rate = *rate;
        if (c.contains("work")) {
          if (auto d = detail::parse_work(r, c.at("work"), where)) ca.work = *d;
        } else {
          r.problems.push_back(where + "work: required");
        }
        m.classes.push_back(ca);
      }
      s.model = m;
    }
  }
  r.opt("c_hat", s.c_hat);
  s.M_H = r.get<Matrix>(j, "M_H", "");
  s.aggregate_variance = r.get<double>(j, "aggregate_variance", "");
  r.opt("u0", s.u0);
  r.opt("u_hat", s.u_hat);
  r.opt("horizon", s.horizon);
  r.opt("fluid_horizon", s.fluid_horizon);
  r.opt("grid", s.grid);
  r.opt("n_list", s.n_list);
  r.opt("replications", s.replications);
  r.opt("limit_replications", s.limit_replications);
  r.opt("limit_step", s.limit_step);
  r.opt("seed", s.seed);
  r.opt("eps_exponent", s.eps_exponent);
  r.opt("threads", s.threads);
  r.opt("output_dir", s.output_dir);

  auto& p = r.problems;
  const std::size_t J = s.alpha.size();
  if (J == 0 && p.empty()) p.push_back("weights.alpha: empty");
  if (!s.alpha.empty() && !s.beta.empty()) {
    try {
      (void)s.weights();
    } catch (const std::exception& e) {
      p.push_back(std::string("weights: ") + e.what());
    }
  }
  auto dim = [&](const char* name, std::size_t got) {
    if (got != J) p.push_back(std::string(name) + ": expected " + std::to_string(J) + " entries");
  };
  if (s.gamma) {
    dim("gamma", s.gamma->size());
    for (double g : *s.gamma)
      if (!(g >= 0.0)) p.push_back("gamma: entries must be >= 0");
  }
  if (s.model) dim("arrivals", s.model->size());
  if (!s.gamma && !s.model) p.push_back("one of gamma or arrivals is required");
  if (!s.c_hat.empty()) dim("c_hat", s.c_hat.size());
  if (!s.u0.empty()) dim("u0", s.u0.size());
  else s.u0.assign(J, 1.0);
  if (!s.u_hat.empty()) dim("u_hat", s.u_hat.size());
  for (double x : s.u0)
    if (!(x >= 0.0)) p.push_back("u0: entries must be >= 0");
  if (s.M_H) {
    dim("M_H", s.M_H->size());
    for (const auto& row : *s.M_H) dim("M_H row", row.size());
  }
  if (s.aggregate_variance && !(*s.aggregate_variance > 0.0)) p.push_back("aggregate_variance: must be > 0");
  if (!(s.horizon > 0.0)) p.push_back("horizon: must be > 0");
  if (!(s.fluid_horizon > 0.0)) p.push_back("fluid_horizon: must be > 0");
  if (s.grid == 0) p.push_back("grid: must be > 0");
  for (double n : s.n_list)
    if (!(n >= 1.0)) p.push_back("n_list: entries must be >= 1");
  if (s.replications == 0) p.push_back("replications: must be > 0");
  if (!(s.limit_step > 0.0)) p.push_back("limit_step: must be > 0");
  if (!(s.eps_exponent > 0.0 && s.eps_exponent < 0.5)) p.push_back("eps_exponent: must lie in (0, 0.5)");
  if (s.threads == 0) s.threads = 1;
  if (!p.empty()) throw ConfigError(p);
  return s;
}

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j;
  j["weights"] = {{"alpha", s.alpha}, {"beta", s.beta}};
  if (s.gamma) j["gamma"] = *s.gamma;
  if (s.model) j["arrivals"] = to_json(*s.model);
  if (!s.c_hat.empty()) j["c_hat"] = s.c_hat;
  if (s.M_H) j["M_H"] = *s.M_H;
  if (s.aggregate_variance) j["aggregate_variance"] = *s.aggregate_variance;
  j["u0"] = s.u0;
  if (!s.u_hat.empty()) j["u_hat"] = s.u_hat;
  j["horizon"] = s.horizon;
  j["fluid_horizon"] = s.fluid_horizon;
  j["grid"] = s.grid;
  j["n_list"] = s.n_list;
  j["replications"] = s.replications;
  j["limit_replications"] = s.limit_replications;
  j["limit_step"] = s.limit_step;
  j["seed"] = s.seed;
  j["eps_exponent"] = s.eps_exponent;
  j["threads"] = s.threads;
  j["output_dir"] = s.output_dir;
  return j;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config " + path.string()});
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  return parse_scenario(doc);
}

}  // namespace gps
