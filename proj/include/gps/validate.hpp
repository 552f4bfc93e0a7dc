#pragma once

// Property battery run by `gpsctl validate`: randomized invariant checks
// across every module, each reported as one pass/fail row.

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gps/diffusion.hpp"
#include "gps/fluid.hpp"
#include "gps/geometry.hpp"
#include "gps/random.hpp"
#include "gps/reduction.hpp"
#include "gps/simulate.hpp"
#include "gps/skorokhod.hpp"

namespace gps {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace gen {

inline Vec simplex(Rng& rng, std::size_t J, double floor = 0.02) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v(J);
  double s = 0.0;
  for (double& x : v) s += (x = floor + u(rng));
  for (double& x : v) x /= s;
  return v;
}

inline GpsWeights weights(Rng& rng, std::size_t J) { return GpsWeights(simplex(rng, J), simplex(rng, J)); }

inline Vec uniform(Rng& rng, std::size_t J, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(J);
  for (double& x : v) x = u(rng);
  return v;
}

/// Step path with `jumps` jumps at sorted uniform times on (0, horizon].
inline StepPath step_path(Rng& rng, std::size_t J, std::size_t jumps, double lo, double hi, double horizon = 1.0) {
  std::uniform_real_distribution<double> u(0.0, horizon);
  std::vector<double> ts(jumps);
  for (double& t : ts) t = u(rng);
  std::sort(ts.begin(), ts.end());
  StepPath p(J, uniform(rng, J, 0.0, hi), horizon);
  for (double t : ts) p.add_jump(t > 0.0 ? t : horizon, uniform(rng, J, lo, hi));
  return p;
}

}  // namespace gen

/// Runs every property; `seed` drives all random inputs.
inline std::vector<PropertyResult> run_property_battery(std::uint64_t seed) {
  std::vector<PropertyResult> out;
  auto check = [&](const std::string& name, const std::function<std::string()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    PropertyResult r{name, false, "", 0.0};
    try {
      r.detail = body();
      r.pass = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  };
  Rng rng(derive_seed(seed, 0, 0));
  std::uniform_int_distribution<std::size_t> dimJ(2, 6);

  check("projection matches brute force", [&]() -> std::string {
    for (int k = 0; k < 2000; ++k) {
      const auto w = gen::weights(rng, dimJ(rng));
      const Vec x = gen::uniform(rng, w.size(), -2.0, 2.0);
      if (sup_distance(project(w, x), project_bruteforce(w, x)) > 1e-12) return "mismatch at trial " + std::to_string(k);
    }
    return "";
  });

  check("projection idempotent and homogeneous", [&]() -> std::string {
    for (int k = 0; k < 2000; ++k) {
      const auto w = gen::weights(rng, dimJ(rng));
      const Vec x = gen::uniform(rng, w.size(), -2.0, 2.0);
      const Vec p = project(w, x);
      if (sup_distance(project(w, p), p) > 1e-12) return "not idempotent";
      Vec x3 = x;
      for (double& v : x3) v *= 3.0;
      Vec p3 = project(w, x3);
      for (double& v : p3) v /= 3.0;
      if (sup_distance(p3, p) > 1e-12) return "not positively homogeneous";
    }
    return "";
  });

  check("cone decomposition round trip", [&]() -> std::string {
    for (int k = 0; k < 2000; ++k) {
      const auto w = gen::weights(rng, dimJ(rng));
      const Vec x = gen::uniform(rng, w.size(), -2.0, 2.0);
      const Vec p = project(w, x);
      Vec push(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) push[i] = p[i] - x[i];
      const bool origin = max_abs(p) == 0.0;
      const auto d = hyperplane_decompose(w, push, origin ? OriginDirection::allowed : OriginDirection::forbidden);
      if (sup_distance(reconstruct(w, d.theta), push) > 1e-10) return "reconstruction mismatch";
    }
    return "";
  });

  check("subcritical set routes agree", [&]() -> std::string {
    for (int k = 0; k < 2000; ++k) {
      const auto w = gen::weights(rng, dimJ(rng));
      const Vec nu = gen::uniform(rng, w.size(), -2.0, 2.0);
      if (sum(nu) < 0.0) continue;
      if (subcritical_from_drift(w, nu).S != subcritical_set_by_rates(w, nu)) return "routes disagree";
    }
    return "";
  });

  check("fluid hand case", []() -> std::string {
    const GpsWeights w({0.4, 0.3, 0.3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    const auto f = fluid_solve(w, Vec{1, 1, 1}, Vec{0.2, 0.0, -0.2}, 20.0);
    if (f.epochs.size() != 3) return "expected 3 epochs";
    if (std::abs(f.epochs[1].t - 5) > 1e-9 || std::abs(f.epochs[2].t - 15) > 1e-9) return "wrong epoch times";
    if (sup_distance(f.epochs[2].u, Vec{3, 0, 0}) > 1e-9) return "wrong absorbed state";
    if (std::abs(f.absorption_time - 15) > 1e-9) return "wrong absorption time";
    return "";
  });

  check("comparison principle", [&]() -> std::string {
    for (int k = 0; k < 500; ++k) {
      const auto w = gen::weights(rng, dimJ(rng));
      const StepPath a = gen::step_path(rng, w.size(), 20, -1.0, 1.0);
      const StepPath d = gen::step_path(rng, w.size(), 20, 0.0, 1.0);
      const StepPath lo = sm_step(w, a);
      const StepPath hi = sm_step(w, a + d);
      for (double t : hi.times()) {
        const Vec x = lo.value_at(t), y = hi.value_at(t);
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] > y[i] + 1e-12) return "ordering violated";
      }
    }
    return "";
  });

  check("Skorokhod problem conditions", [&]() -> std::string {
    for (int k = 0; k < 300; ++k) {
      const auto w = gen::weights(rng, dimJ(rng));
      const StepPath psi = gen::step_path(rng, w.size(), 30, -1.0, 1.0);
      if (!validate_sp(w, psi, sm_step(w, psi), 1e-9).ok()) return "violation";
    }
    return "";
  });

  check("reduced map equivalence", [&]() -> std::string {
    for (int k = 0; k < 200; ++k) {
      const std::size_t J = 3 + k % 2;
      const auto w = gen::weights(rng, J);
      ClassSet S{J - 1};
      StepPath psi(J, Vec(J, 0.0), 1.0);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int m = 1; m <= 20; ++m) {
        Vec dv(J);
        for (std::size_t i = 0; i < J; ++i) dv[i] = S.contains(i) ? -5.0 + u(rng) : u(rng);
        psi.add_jump(m / 20.0, dv);
      }
      const auto rep = reduced_sm_equiv_check(w, S, psi, 1e-9);
      if (!rep.window_valid || !rep.agrees) return "reduced and restricted maps disagree";
    }
    return "";
  });

  check("work conservation of the event engine", [&]() -> std::string {
    for (int k = 0; k < 20; ++k) {
      const auto w = gen::weights(rng, 3);
      ArrivalModel m;
      for (std::size_t j = 0; j < 3; ++j) m.classes.push_back({DistKind::exponential, 0.3, Distribution::exponential(1.0)});
      const StepPath H = gen_arrivals(m, 1.0, 50.0, seed, static_cast<std::uint64_t>(k));
      const auto run = gps_simulate(w, Vec{1.0, 0.5, 0.0}, H, 50.0);
      double agg = 1.5, t0 = 0.0;
      for (const auto& j : H.jumps()) {
        agg = std::max(0.0, agg - (j.t - t0)) + sum(j.dv);
        t0 = j.t;
        if (std::abs(sum(run.U.value_at(j.t)) - agg) > 1e-9) return "aggregate workload mismatch";
      }
    }
    return "";
  });

  check("oscillation coefficients", []() -> std::string {
    for (int n = 1; n <= 10; ++n) {
      const auto d = oscillation_demo(n);
      const double want = std::ldexp(1.0, n - 1) / n;
      if (d.xi[0] != want || d.xi[1] != want) return "wrong coefficient at n=" + std::to_string(n);
    }
    return "";
  });

  return out;
}

}  // namespace gps
