#pragma once

// Replicated simulation of the diffusion-scaled workload and busy-time
// processes, with statistics merged in a fixed order.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gps/diffusion.hpp"
#include "gps/fluid.hpp"
#include "gps/geometry.hpp"
#include "gps/simulate.hpp"
#include "gps/types.hpp"

namespace gps {

/// Running mean and co-moment matrix (Welford), mergeable in order.
class Moments {
 public:
  Moments() = default;
  explicit Moments(std::size_t dim) : mean_(dim, 0.0), co_(dim * dim, 0.0), delta_(dim) {}

  std::size_t dim() const { return mean_.size(); }
  std::size_t count() const { return n_; }

  void add(std::span<const double> x) {
    const std::size_t d = dim();
    ++n_;
    const double inv = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < d; ++i) {
      delta_[i] = x[i] - mean_[i];
      mean_[i] += delta_[i] * inv;
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) co_[i * d + j] += delta_[i] * (x[j] - mean_[j]);
  }

  void merge(const Moments& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const std::size_t d = dim();
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_), n = na + nb;
    for (std::size_t i = 0; i < d; ++i) delta_[i] = o.mean_[i] - mean_[i];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) co_[i * d + j] += o.co_[i * d + j] + delta_[i] * delta_[j] * na * nb / n;
    for (std::size_t i = 0; i < d; ++i) mean_[i] += delta_[i] * nb / n;
    n_ += o.n_;
  }

  const Vec& mean() const { return mean_; }
  double covariance(std::size_t i, std::size_t j) const {
    return n_ > 1 ? co_[i * dim() + j] / static_cast<double>(n_ - 1) : 0.0;
  }
  double variance(std::size_t i) const { return covariance(i, i); }
  Vec sd() const {
    Vec s(dim());
    for (std::size_t i = 0; i < dim(); ++i) s[i] = std::sqrt(variance(i));
    return s;
  }
  Matrix covariance() const {
    Matrix m(dim(), Vec(dim()));
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t j = 0; j < dim(); ++j) m[i][j] = covariance(i, j);
    return m;
  }

 private:
  std::size_t n_ = 0;
  Vec mean_;
  Vec co_;
  Vec delta_;
};

struct SeriesStats {
  std::vector<double> times;
  std::vector<Vec> mean;
  std::vector<Vec> variance;
  std::vector<Matrix> covariance;
};

struct MetricStats {
  Vec mean;
  Vec sd;
};

/// Statistics at one scaling level (n > 0) or for the limit (n == 0).
struct LevelStats {
  double n = 0.0;
  std::size_t replications = 0;
  SeriesStats U;
  SeriesStats T;
  MetricStats sup_U;                    // mean/sd of sup_t U_hat_j (collapse metric on S)
  std::optional<MetricStats> crushing;  // sup of the reflected centred modified input, prelimit only

  bool is_limit() const { return n == 0.0; }
};

struct StatsTable {
  ClassSet S;
  std::vector<LevelStats> levels;
  std::optional<LevelStats> limit;
};

struct MonteCarloConfig {
  GpsWeights weights{{1.0}, {1.0}};
  ArrivalModel model;
  Vec u_hat;  // U(0) = sqrt(n) u_hat; defaults to zero
  double horizon = 1.0;
  std::size_t grid = 256;  // output points per unit of scaled time
  std::vector<double> n_list;
  std::size_t replications = 1000;
  std::uint64_t seed = 0;
  double eps_exponent = 0.25;  // eps^n = n^(-eps_exponent)
  unsigned threads = 1;
  bool crushing = true;

  // Limit process; skipped when limit_replications == 0.
  std::size_t limit_replications = 0;
  double limit_step = 1.0 / 4096.0;
  std::optional<Matrix> M_H;  // defaults to the model covariance
};

namespace detail {

inline constexpr std::size_t kBlock = 256;

struct LevelAccumulator {
  std::vector<Moments> U, T;
  Moments sup_U, crush;

  LevelAccumulator(std::size_t J, std::size_t points) : U(points, Moments(J)), T(points, Moments(J)), sup_U(J), crush(J) {}

  void merge(const LevelAccumulator& o) {
    for (std::size_t k = 0; k < U.size(); ++k) {
      U[k].merge(o.U[k]);
      T[k].merge(o.T[k]);
    }
    sup_U.merge(o.sup_U);
    crush.merge(o.crush);
  }
};

inline std::size_t grid_points(double horizon, std::size_t grid) {
  return static_cast<std::size_t>(std::llround(horizon * static_cast<double>(grid))) + 1;
}

/// Runs blocks [0, blocks) through `work(block, acc)` on up to `threads`
/// threads, then merges block results in block order.
template <class Make, class Work>
auto run_blocks(std::size_t blocks, unsigned threads, Make make, Work work) {
  std::vector<decltype(make())> parts;
  parts.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) parts.push_back(make());
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(blocks, 1))));
  if (threads == 1) {
    for (std::size_t b = 0; b < blocks; ++b) work(b, parts[b]);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t b = t; b < blocks; b += threads) work(b, parts[b]);
      });
    for (auto& th : pool) th.join();
  }
  auto total = make();
  for (auto& p : parts) total.merge(p);
  return total;
}

inline LevelStats finish(const LevelAccumulator& acc, double n, std::size_t reps, double horizon, std::size_t grid,
                         bool crushing) {
  LevelStats out;
  out.n = n;
  out.replications = reps;
  auto fill = [&](const std::vector<Moments>& ms, SeriesStats& s) {
    for (std::size_t k = 0; k < ms.size(); ++k) {
      s.times.push_back(std::min(horizon, static_cast<double>(k) / static_cast<double>(grid)));
      s.mean.push_back(ms[k].mean());
      Vec v(ms[k].dim());
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = ms[k].variance(j);
      s.variance.push_back(std::move(v));
      s.covariance.push_back(ms[k].covariance());
    }
  };
  fill(acc.U, out.U);
  fill(acc.T, out.T);
  out.sup_U = {acc.sup_U.mean(), acc.sup_U.sd()};
  if (crushing) out.crushing = MetricStats{acc.crush.mean(), acc.crush.sd()};
  return out;
}

}  // namespace detail

/// One prelimit replication: samples U_hat, T_hat on the output grid, the
/// exact sup of U_hat over the horizon and the crushing metric for S.
class ReplicationRunner {
 public:
  ReplicationRunner(const MonteCarloConfig& cfg, double n, ClassSet S)
      : cfg_(cfg), n_(n), S_(S), gamma_(cfg.model.gamma()), gamma_n_(cfg.model.gamma_n(n)) {
    const std::size_t J = cfg.weights.size();
    points_ = detail::grid_points(cfg.horizon, cfg.grid);
    u_.assign(J, 0.0);
    t_.assign(J, 0.0);
    sup_.assign(J, 0.0);
    crush_.assign(J, 0.0);
    q_.assign(J, 0.0);
    eps_ = std::pow(n, -cfg.eps_exponent);
  }

  void run(std::uint64_t rep, detail::LevelAccumulator& acc) {
    const std::size_t J = cfg_.weights.size();
    const double rn = std::sqrt(n_);
    Vec u0(J, 0.0);
    if (!cfg_.u_hat.empty())
      for (std::size_t j = 0; j < J; ++j) u0[j] = rn * cfg_.u_hat[j];
    GpsEngine engine(cfg_.weights, u0);
    ArrivalStreams arrivals(cfg_.model, n_, cfg_.seed, rep);
    for (std::size_t j = 0; j < J; ++j) {
      sup_[j] = u0[j];
      q_[j] = 0.0;
      crush_[j] = 0.0;
    }
    double qt = 0.0;  // time of the last crushing-queue update
    const double end = n_ * cfg_.horizon;

    auto drain_queues = [&](double t) {
      if (!cfg_.crushing) return;
      for (auto j : S_.members()) q_[j] = std::max(0.0, q_[j] - (gamma_n_[j] + eps_) * (t - qt));
      qt = t;
    };
    auto sample = [&](std::size_t k) {
      const double s = static_cast<double>(k) / static_cast<double>(cfg_.grid);
      const double t = n_ * std::min(s, cfg_.horizon);
      engine.advance_to(t);
      for (std::size_t j = 0; j < J; ++j) {
        u_[j] = engine.workload()[j] / rn;
        t_[j] = (engine.busy()[j] - t * gamma_[j]) / rn;
      }
      acc.U[k].add(u_);
      acc.T[k].add(t_);
    };

    std::size_t k = 0;
    for (;;) {
      const std::size_t j = arrivals.peek();
      const double ta = arrivals.time(j);
      if (ta > end) break;
      while (k < points_ && n_ * static_cast<double>(k) / static_cast<double>(cfg_.grid) < ta) sample(k++);
      engine.advance_to(ta);
      engine.arrive(j, arrivals.work(j));
      sup_[j] = std::max(sup_[j], engine.workload()[j]);
      if (cfg_.crushing && S_.contains(j)) {
        drain_queues(ta);
        q_[j] += arrivals.work(j);
        crush_[j] = std::max(crush_[j], q_[j]);
      }
      arrivals.pop(j);
    }
    while (k < points_) sample(k++);
    for (std::size_t i = 0; i < J; ++i) {
      sup_[i] /= rn;
      crush_[i] /= rn;
    }
    acc.sup_U.add(sup_);
    acc.crush.add(crush_);
  }

 private:
  const MonteCarloConfig& cfg_;
  double n_;
  ClassSet S_;
  Vec gamma_, gamma_n_;
  std::size_t points_;
  Vec u_, t_, sup_, crush_, q_;
  double eps_;
};

inline LevelStats simulate_level(const MonteCarloConfig& cfg, double n, ClassSet S) {
  const std::size_t J = cfg.weights.size();
  const std::size_t points = detail::grid_points(cfg.horizon, cfg.grid);
  const std::size_t blocks = (cfg.replications + detail::kBlock - 1) / detail::kBlock;
  auto acc = detail::run_blocks(
      blocks, cfg.threads, [&] { return detail::LevelAccumulator(J, points); },
      [&](std::size_t b, detail::LevelAccumulator& a) {
        ReplicationRunner runner(cfg, n, S);
        const std::size_t hi = std::min(cfg.replications, (b + 1) * detail::kBlock);
        for (std::size_t r = b * detail::kBlock; r < hi; ++r) runner.run(r, a);
      });
  return detail::finish(acc, n, cfg.replications, cfg.horizon, cfg.grid, cfg.crushing && !S.empty());
}

inline DiffusionConfig limit_config(const MonteCarloConfig& cfg) {
  DiffusionConfig d;
  d.M_H = cfg.M_H ? *cfg.M_H : cfg.model.covariance();
  d.c_hat = cfg.model.c_hat.empty() ? Vec(cfg.weights.size(), 0.0) : cfg.model.c_hat;
  d.u_hat = cfg.u_hat.empty() ? Vec(cfg.weights.size(), 0.0) : cfg.u_hat;
  d.step = cfg.limit_step;
  d.horizon = cfg.horizon;
  d.seed = cfg.seed;
  return d;
}

/// Limit-process statistics on the output grid from `reps` paths.
inline LevelStats simulate_limit(const GpsWeights& w, const Vec& gamma, const DiffusionConfig& dcfg, std::size_t reps,
                                 std::size_t grid, unsigned threads = 1) {
  const std::size_t J = w.size();
  const std::size_t points = detail::grid_points(dcfg.horizon, grid);
  const double ratio = 1.0 / (static_cast<double>(grid) * dcfg.step);
  const auto stride = static_cast<std::size_t>(std::llround(ratio));
  if (stride == 0 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio)
    throw std::invalid_argument("limit step must divide the output grid spacing");
  const std::size_t blocks = (reps + detail::kBlock - 1) / detail::kBlock;
  auto acc = detail::run_blocks(
      blocks, threads, [&] { return detail::LevelAccumulator(J, points); },
      [&](std::size_t b, detail::LevelAccumulator& a) {
        LimitSampler sampler(w, gamma, dcfg);
        LimitPaths paths;
        Vec sup(J);
        const std::size_t hi = std::min(reps, (b + 1) * detail::kBlock);
        for (std::size_t r = b * detail::kBlock; r < hi; ++r) {
          sampler.sample(r, paths);
          std::fill(sup.begin(), sup.end(), 0.0);
          for (std::size_t k = 0; k < paths.U.points(); ++k)
            for (std::size_t j = 0; j < J; ++j) sup[j] = std::max(sup[j], paths.U.row(k)[j]);
          for (std::size_t k = 0; k < points; ++k) {
            a.U[k].add(paths.U.row(k * stride));
            a.T[k].add(paths.T.row(k * stride));
          }
          a.sup_U.add(sup);
        }
      });
  return detail::finish(acc, 0.0, reps, dcfg.horizon, grid, false);
}

inline LevelStats simulate_limit(const MonteCarloConfig& cfg) {
  return simulate_limit(cfg.weights, cfg.model.gamma(), limit_config(cfg), cfg.limit_replications, cfg.grid,
                        cfg.threads);
}

/// Replicated statistics for every n in n_list and, if requested, for the
/// limit process. Output depends only on the config, not on thread count.
inline StatsTable monte_carlo(const MonteCarloConfig& cfg) {
  cfg.model.validate();
  require_dim(cfg.model.size(), cfg.weights.size(), "monte_carlo model");
  if (!cfg.u_hat.empty()) require_dim(cfg.u_hat.size(), cfg.weights.size(), "monte_carlo u_hat");
  if (!(cfg.horizon > 0.0) || cfg.grid == 0) throw std::invalid_argument("monte_carlo: bad horizon or grid");
  StatsTable table;
  table.S = subcritical_analysis(cfg.weights, cfg.model.gamma()).S;
  for (double n : cfg.n_list) table.levels.push_back(simulate_level(cfg, n, table.S));
  if (cfg.limit_replications > 0) table.limit = simulate_limit(cfg);
  return table;
}

}  // namespace gps
