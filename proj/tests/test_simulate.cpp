#include <catch_amalgamated.hpp>

#include <cmath>

#include "generators.hpp"
#include "gps/io.hpp"
#include "gps/monte_carlo.hpp"
#include "gps/simulate.hpp"

using namespace gps;
using Catch::Approx;

namespace {

const GpsWeights kThirds({0.4, 0.3, 0.3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});

ArrivalModel poisson_model(const Vec& gamma, double mean_work = 1.0) {
  ArrivalModel m;
  for (double g : gamma) m.classes.push_back({DistKind::exponential, g / mean_work, Distribution::exponential(mean_work)});
  return m;
}

// Total workload of a work-conserving unit-rate server: the running-inf
// reflection of x0 + (arrived work) - t, with the infimum taken at the
// left limits before each arrival and at t itself.
double aggregate_oracle(const StepPath& H, double x0, double t) {
  double arrived = 0.0, low = std::min(0.0, x0);
  for (const auto& j : H.jumps()) {
    if (j.t > t) break;
    low = std::min(low, x0 + arrived - j.t);
    arrived += sum(j.dv);
  }
  const double xt = x0 + arrived - t;
  return xt - std::min(low, xt);
}

// Departures of a single-server queue with initial content q0, input H and
// rate g, from the explicit reflection formula.
double departures_oracle(const StepPath& H, std::size_t j, double q0, double g, double t) {
  double arrived = 0.0, low = std::min(0.0, q0);
  for (const auto& jmp : H.jumps()) {
    if (jmp.t > t) break;
    low = std::min(low, q0 + arrived - g * jmp.t);
    arrived += jmp.dv[j];
  }
  const double net = q0 + arrived - g * t;
  const double queue = net - std::min(low, net);
  return q0 + arrived - queue;
}

StepPath random_arrivals(testgen::Gen& g, std::size_t J, std::size_t jumps, double horizon) {
  StepPath H(J, Vec(J, 0.0), horizon);
  for (double t : g.times(jumps, horizon)) {
    Vec dv(J, 0.0);
    dv[g.index(0, J - 1)] = g.uniform(0.0, 1.0);
    H.add_jump(t, dv);
  }
  return H;
}

}  // namespace

TEST_CASE("distribution moments") {
  REQUIRE(Distribution::exponential(2.0).variance() == 4.0);
  REQUIRE(Distribution::deterministic(3.0).second_moment() == 9.0);
  REQUIRE(Distribution::uniform(0.0, 2.0).variance() == Approx(1.0 / 3.0));
  REQUIRE(Distribution::uniform(1.0, 3.0).scaled(2.0).mean() == 4.0);
  REQUIRE_THROWS_AS(Distribution::exponential(0.0).validate("w"), std::invalid_argument);
  REQUIRE_THROWS_AS(Distribution::uniform(2.0, 1.0).validate("w"), std::invalid_argument);
}

TEST_CASE("model covariance") {
  // Compound Poisson: lambda E[W^2].
  const auto m = poisson_model({0.6, 0.3, 0.1}, 1.5);
  const auto M = m.covariance();
  for (std::size_t j = 0; j < 3; ++j) {
    const double lambda = m.classes[j].rate;
    REQUIRE(M[j][j] == Approx(lambda * 2.0 * 1.5 * 1.5));
  }
  REQUIRE(M[0][1] == 0.0);

  // Deterministic arrivals, deterministic work: no noise.
  ArrivalModel d;
  d.classes.push_back({DistKind::deterministic, 2.0, Distribution::deterministic(0.5)});
  REQUIRE(d.covariance()[0][0] == 0.0);

  const auto r = poisson_model({0.4, 0.3, 0.3}).rescaled_to_aggregate_variance(3.0);
  double total = 0.0;
  for (const auto& row : r.covariance())
    for (double x : row) total += x;
  REQUIRE(total == Approx(3.0));
  REQUIRE(r.gamma()[0] == Approx(0.4));
  REQUIRE(r.classes[0].work.mean() == Approx(1.5));
}

TEST_CASE("perturbed rates") {
  auto m = poisson_model({0.4, 0.3, 0.3});
  m.c_hat = {1.0, -1.0, 0.0};
  const Vec g = m.gamma_n(100.0);
  REQUIRE(g[0] == Approx(0.5));
  REQUIRE(g[1] == Approx(0.2));
  REQUIRE(g[2] == Approx(0.3));
  m.c_hat = {0.0, -10.0, 0.0};
  REQUIRE_THROWS_AS(m.gamma_n(100.0), std::invalid_argument);
}

TEST_CASE("arrivals obey the law of large numbers") {
  const Vec gamma{0.5, 0.3, 0.2};
  for (auto kind : {DistKind::exponential, DistKind::deterministic, DistKind::uniform}) {
    ArrivalModel m = poisson_model(gamma);
    for (auto& c : m.classes) c.interarrival = kind;
    const auto M = m.covariance();
    const double n = 1e4;
    const StepPath H = gen_arrivals(m, n, 1.0, 7);
    const Vec end = H.value_at(n);
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(std::abs(end[j] - gamma[j] * n) <= 3.0 * std::sqrt(M[j][j] * n) + 5.0);
  }
}

TEST_CASE("average arrival rate is unbiased") {
  const Vec gamma{0.5, 0.3, 0.2};
  const auto m = poisson_model(gamma);
  const auto M = m.covariance();
  const double t = 200.0;
  const std::size_t reps = 400;
  Vec mean(3, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    const Vec end = gen_arrivals(m, t, 1.0, 8, r).value_at(t);
    for (std::size_t j = 0; j < 3; ++j) mean[j] += end[j] / t / static_cast<double>(reps);
  }
  for (std::size_t j = 0; j < 3; ++j)
    REQUIRE(std::abs(mean[j] - gamma[j]) <= 3.0 * std::sqrt(M[j][j] / t / static_cast<double>(reps)));
}

TEST_CASE("arrivals are reproducible per seed and replication") {
  const auto m = poisson_model({0.5, 0.5});
  const StepPath a = gen_arrivals(m, 50.0, 1.0, 3, 4), b = gen_arrivals(m, 50.0, 1.0, 3, 4);
  REQUIRE(a.times() == b.times());
  REQUIRE(a.values() == b.values());
  REQUIRE(gen_arrivals(m, 50.0, 1.0, 3, 5).times() != a.times());
  REQUIRE(gen_arrivals(m, 50.0, 1.0, 4, 4).times() != a.times());
}

TEST_CASE("workload examples") {
  const GpsWeights half({0.5, 0.5}, {0.5, 0.5});
  const StepPath none(2, {0.0, 0.0}, 4.0);
  const auto run = gps_simulate(half, Vec{1.0, 0.5}, none, 4.0);
  // Both drain at 1/2 until class 2 empties at t = 1, then class 1 drains at rate 1.
  REQUIRE(run.U.value_at(1.0)[0] == Approx(0.5));
  REQUIRE(run.U.value_at(1.0)[1] == 0.0);
  REQUIRE(run.U.value_at(1.5)[0] == Approx(0.0).margin(1e-15));
  REQUIRE(run.U.value_at(4.0) == Vec{0.0, 0.0});
  REQUIRE(run.T.value_at(4.0)[0] == Approx(1.0));
  REQUIRE(run.T.value_at(4.0)[1] == Approx(0.5));
  REQUIRE(run.face_times.at(ClassSet{}) == Approx(1.0));
  REQUIRE(run.face_times.at(ClassSet{1}) == Approx(0.5));
  REQUIRE(run.face_times.at(ClassSet{0, 1}) == Approx(2.5));

  StepPath one(2, {0.0, 0.0}, 2.0);
  one.add_jump(1.0, {0.0, 2.0});
  const auto r2 = gps_simulate(half, Vec{0.0, 0.0}, one, 2.0);
  REQUIRE(r2.U.value_at(1.0)[1] == 2.0);
  REQUIRE(r2.U.value_at(2.0)[1] == Approx(1.0));
}

TEST_CASE("total workload is conserved") {
  testgen::Gen g(51);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t J = g.index(2, 5);
    const auto w = g.weights(J);
    const double horizon = 10.0;
    const StepPath H = random_arrivals(g, J, g.index(0, 30), horizon);
    const Vec U0 = g.vec(J, 0.0, 1.0);
    const auto run = gps_simulate(w, U0, H, horizon);
    for (double t : g.times(40, horizon)) REQUIRE(sum(run.U.value_at(t)) == Approx(aggregate_oracle(H, sum(U0), t)).margin(1e-9));
  }
}

TEST_CASE("busy times balance the workload") {
  testgen::Gen g(52);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t J = g.index(2, 5);
    const auto w = g.weights(J);
    const double horizon = 10.0;
    const StepPath H = random_arrivals(g, J, g.index(0, 30), horizon);
    const Vec U0 = g.vec(J, 0.0, 1.0);
    const auto run = gps_simulate(w, U0, H, horizon);
    for (double t : g.times(40, horizon)) {
      const Vec u = run.U.value_at(t), T = run.T.value_at(t), h = H.value_at(t);
      for (std::size_t j = 0; j < J; ++j) {
        REQUIRE(u[j] >= 0.0);
        REQUIRE(u[j] == Approx(U0[j] + h[j] - T[j]).margin(1e-9));
      }
    }
    for (const auto& s : run.T.segments()) {
      double total = 0.0;
      for (double r : s.slope) {
        REQUIRE(r >= -1e-12);
        REQUIRE(r <= 1.0 + 1e-12);
        total += r;
      }
      REQUIRE(total <= 1.0 + 1e-12);
    }
    double faces = 0.0;
    for (const auto& [E, dt] : run.face_times) faces += dt;
    REQUIRE(faces == Approx(horizon).margin(1e-9));
  }
}

TEST_CASE("netput path") {
  const GpsWeights half({0.5, 0.5}, {0.5, 0.5});
  StepPath H(2, {0.0, 0.0}, 2.0);
  H.add_jump(1.0, {1.0, 0.0});
  const auto run = gps_simulate(half, Vec{1.0, 1.0}, H, 2.0);
  REQUIRE(run.X.value_at(0.5) == Vec{0.75, 0.75});
  REQUIRE(run.X.value_at(1.0) == Vec{1.5, 0.5});
  REQUIRE(run.X.value_at(2.0) == Vec{1.0, 0.0});
}

TEST_CASE("workload matches the reflection map on refined grids") {
  // The exact workload is the reflection of U0 + H - alpha t; sampling the
  // netput on a grid and reflecting it should converge to it.
  testgen::Gen g(53);
  const auto w = GpsWeights({0.5, 0.3, 0.2}, {0.2, 0.3, 0.5});
  const double horizon = 4.0;
  const StepPath H = random_arrivals(g, 3, 12, horizon);
  const Vec U0{0.3, 0.1, 0.6};
  const auto run = gps_simulate(w, U0, H, horizon);
  double prev = std::numeric_limits<double>::infinity();
  for (int m = 6; m <= 10; ++m) {
    const std::size_t steps = std::size_t{1} << m;
    const double dt = horizon / static_cast<double>(steps);
    std::vector<Vec> xs;
    for (std::size_t k = 0; k <= steps; ++k) xs.push_back(run.X.value_at(dt * static_cast<double>(k)));
    const StepPath phi = sm_step(w, StepPath::from_samples(dt, xs));
    double err = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) {
      const double t = dt * static_cast<double>(k);
      err = std::max(err, sup_distance(phi.value_at(t), run.U.value_at(t)));
    }
    REQUIRE(err <= prev * 1.0000001);
    prev = err;
  }
  REQUIRE(prev < 0.02);
}

TEST_CASE("arrivals at the horizon are kept") {
  const GpsWeights half({0.5, 0.5}, {0.5, 0.5});
  StepPath H(2, {0.0, 0.0}, 1.0);
  H.add_jump(1.0, {0.0, 1.0});
  const auto run = gps_simulate(half, Vec{0.0, 0.0}, H, 1.0);
  REQUIRE(run.U.value_at(1.0) == Vec{0.0, 1.0});
}

TEST_CASE("modified arrivals examples") {
  StepPath H(1, {2.0}, 5.0);
  const auto out = modify_arrivals(H, Vec{0.5}, ClassSet{0});
  for (double t : {0.0, 1.0, 3.9, 4.0, 4.5}) REQUIRE(out.value_at(t)[0] == Approx(std::min(0.5 * t, 2.0)));

  const StepPath zero(2, {0.0, 0.0}, 3.0);
  const auto z = modify_arrivals(zero, Vec{1.0, 1.0}, ClassSet{0});
  for (double t : {0.0, 1.0, 3.0}) REQUIRE(z.value_at(t) == Vec{0.0, 0.0});

  REQUIRE_THROWS_AS(modify_arrivals(H, Vec{0.0}, ClassSet{0}), std::invalid_argument);
}

TEST_CASE("modified arrivals follow the queue formula") {
  testgen::Gen g(54);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t J = g.index(1, 4);
    const double horizon = 5.0;
    StepPath H(J, g.vec(J, 0.0, 0.5), horizon);
    for (double t : g.times(g.index(0, 20), horizon)) H.add_jump(t, g.vec(J, 0.0, 1.0));
    const Vec gt = g.vec(J, 0.2, 2.0);
    const ClassSet S(g.index(0, ClassSet::all(J).bits()));
    const auto out = modify_arrivals(H, gt, S);
    auto ts = g.times(30, horizon);
    for (double t : ts) {
      const Vec v = out.value_at(t), h = H.value_at(t);
      for (std::size_t j = 0; j < J; ++j) {
        if (S.contains(j)) {
          REQUIRE(v[j] == Approx(departures_oracle(H, j, H.initial()[j], gt[j], t)).margin(1e-9));
          REQUIRE(v[j] <= h[j] + 1e-12);
        } else {
          REQUIRE(v[j] == Approx(h[j]).margin(1e-12));
        }
      }
    }
    // Lipschitz in the S-coordinates.
    for (std::size_t k = 1; k < ts.size(); ++k) {
      const Vec a = out.value_at(ts[k - 1]), b = out.value_at(ts[k]);
      for (auto j : S.members()) REQUIRE(b[j] - a[j] <= gt[j] * (ts[k] - ts[k - 1]) + 1e-9);
    }
  }
}

TEST_CASE("scaling examples") {
  const PathFn f = [](double t) { return Vec{2.0 * t, 1.0}; };
  const auto fl = scale(f, ScaleMode::fluid, 100.0, 1.0, 4);
  REQUIRE(fl.times.size() == 5);
  REQUIRE(fl.values[2][0] == Approx(1.0));
  REQUIRE(fl.values[2][1] == Approx(0.01));

  const auto df = scale(f, ScaleMode::diffusion, 100.0, 1.0, 4, linear_center({2.0, 0.0}));
  REQUIRE(df.values[3][0] == Approx(0.0).margin(1e-12));
  REQUIRE(df.values[3][1] == Approx(0.1));
  REQUIRE(scale(f, ScaleMode::diffusion, 4.0, 1.0, 2, zero_center(2)).values[2][0] == Approx(4.0));

  REQUIRE_THROWS_AS(scale(f, ScaleMode::diffusion, 100.0, 1.0, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(scale(f, ScaleMode::fluid, 100.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("fluid scaling of the workload approaches the fluid solution") {
  const auto m = poisson_model({0.2, 0.2, 0.2});
  const Vec u0{1.0, 0.5, 0.25};
  const auto fluid = fluid_solve(kThirds, u0, Vec{-0.2, -0.1, -0.1}, 3.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double n : {1e2, 1e3, 1e4}) {
    Vec U0 = u0;
    for (double& x : U0) x *= n;
    const auto run = gps_simulate(kThirds, U0, gen_arrivals(m, n, 3.0, 9), 3.0 * n);
    const auto s = scale(run.U, ScaleMode::fluid, n, 3.0, 16);
    double err = 0.0;
    for (std::size_t k = 0; k < s.times.size(); ++k)
      err = std::max(err, sup_distance(s.values[k], fluid.state_at(s.times[k])));
    REQUIRE(err < prev);
    prev = err;
  }
  REQUIRE(prev < 0.05);
}

TEST_CASE("moments merge like a single pass") {
  testgen::Gen g(55);
  Moments all(2), a(2), b(2);
  for (int k = 0; k < 500; ++k) {
    const Vec x = g.vec(2, -1.0, 3.0);
    all.add(x);
    (k < 200 ? a : b).add(x);
  }
  a.merge(b);
  REQUIRE(a.count() == 500);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(a.mean()[i] == Approx(all.mean()[i]).epsilon(1e-12));
    for (std::size_t j = 0; j < 2; ++j) REQUIRE(a.covariance(i, j) == Approx(all.covariance(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("Monte Carlo output does not depend on the thread count") {
  MonteCarloConfig cfg;
  cfg.weights = kThirds;
  cfg.model = poisson_model({0.4, 0.3, 0.3});
  cfg.grid = 8;
  cfg.n_list = {50.0};
  cfg.replications = 300;
  cfg.seed = 11;
  const auto one = monte_carlo(cfg);
  cfg.threads = 3;
  const auto three = monte_carlo(cfg);
  REQUIRE(io::stats_csv(one) == io::stats_csv(three));
  REQUIRE(io::metrics_csv(one) == io::metrics_csv(three));
  REQUIRE(io::stats_csv(monte_carlo(cfg)) == io::stats_csv(three));
  cfg.seed = 12;
  REQUIRE(io::stats_csv(monte_carlo(cfg)) != io::stats_csv(three));
}

TEST_CASE("Monte Carlo statistics for a single class") {
  // One class at full load: U_hat is reflected Brownian motion with
  // variance rate 2 started at 0, so U_hat(1) has the law of |N(0, 2)|.
  MonteCarloConfig cfg;
  cfg.weights = GpsWeights({1.0}, {1.0});
  cfg.model = poisson_model({1.0});
  cfg.grid = 4;
  cfg.n_list = {2000.0};
  cfg.replications = 2000;
  cfg.seed = 5;
  const auto table = monte_carlo(cfg);
  REQUIRE(table.S.empty());
  const auto& lvl = table.levels.front();
  const double want = std::sqrt(2.0) * std::sqrt(2.0 / M_PI);
  const double sd = std::sqrt(lvl.U.variance.back()[0] / 2000.0);
  REQUIRE(std::abs(lvl.U.mean.back()[0] - want) < 4.0 * sd + 0.03);
  REQUIRE_FALSE(lvl.crushing.has_value());
  REQUIRE(io::summary_json(table)["levels"][0]["collapse_metric"] == "n/a");
}

TEST_CASE("limit statistics require an aligned step") {
  DiffusionConfig d;
  d.M_H = {{1.0, 0.0}, {0.0, 1.0}};
  d.step = 1.0 / 100.0;
  const GpsWeights half({0.5, 0.5}, {0.5, 0.5});
  REQUIRE_THROWS_AS(simulate_limit(half, Vec{0.5, 0.5}, d, 10, 8), std::invalid_argument);
  d.step = 1.0 / 64.0;
  const auto lvl = simulate_limit(half, Vec{0.5, 0.5}, d, 10, 8);
  REQUIRE(lvl.is_limit());
  REQUIRE(lvl.U.times.size() == 9);
}
