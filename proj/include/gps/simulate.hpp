#pragma once

// Arrival generation, the event-driven GPS workload engine, smoothed
// arrivals for subcritical classes and fluid/diffusion scaling.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gps/fluid.hpp"
#include "gps/geometry.hpp"
#include "gps/random.hpp"
#include "gps/skorokhod.hpp"
#include "gps/types.hpp"

namespace gps {

enum class DistKind { exponential, deterministic, uniform };

/// A positive random variable given by its family and parameters:
/// exponential(mean), deterministic(mean) or uniform(lo, hi).
struct Distribution {
  DistKind kind = DistKind::exponential;
  double lo = 1.0;  // mean for exponential / deterministic
  double hi = 1.0;  // upper bound for uniform

  static Distribution exponential(double mean) { return {DistKind::exponential, mean, mean}; }
  static Distribution deterministic(double value) { return {DistKind::deterministic, value, value}; }
  static Distribution uniform(double lo, double hi) { return {DistKind::uniform, lo, hi}; }

  double mean() const { return kind == DistKind::uniform ? 0.5 * (lo + hi) : lo; }
  double variance() const {
    switch (kind) {
      case DistKind::exponential: return lo * lo;
      case DistKind::deterministic: return 0.0;
      case DistKind::uniform: return (hi - lo) * (hi - lo) / 12.0;
    }
    return 0.0;
  }
  double second_moment() const { return variance() + mean() * mean(); }

  Distribution scaled(double c) const { return {kind, lo * c, hi * c}; }

  double sample(Rng& rng) const {
    switch (kind) {
      case DistKind::exponential: return std::exponential_distribution<double>(1.0 / lo)(rng);
      case DistKind::deterministic: return lo;
      case DistKind::uniform: return std::uniform_real_distribution<double>(lo, hi)(rng);
    }
    return lo;
  }

  void validate(const std::string& what) const {
    if (!(lo >= 0.0) || !(hi >= lo) || !(mean() > 0.0) || !std::isfinite(hi))
      throw std::invalid_argument(what + ": invalid distribution parameters");
  }
};

/// Per-class arrivals: a renewal stream of events with mean rate `rate`,
/// each bringing an independent amount of work. Exponential interarrivals
/// make the class compound Poisson.
struct ClassArrivals {
  DistKind interarrival = DistKind::exponential;
  double rate = 1.0;
  Distribution work = Distribution::exponential(1.0);

  bool compound_poisson() const { return interarrival == DistKind::exponential; }
  double gamma() const { return rate * work.mean(); }

  /// Interarrival law for event rate r: mean 1/r; uniform means U(0, 2/r).
  Distribution interarrival_law(double r) const {
    switch (interarrival) {
      case DistKind::exponential: return Distribution::exponential(1.0 / r);
      case DistKind::deterministic: return Distribution::deterministic(1.0 / r);
      case DistKind::uniform: return Distribution::uniform(0.0, 2.0 / r);
    }
    return Distribution::exponential(1.0 / r);
  }
};

struct ArrivalModel {
  std::vector<ClassArrivals> classes;
  Vec c_hat;  // drift perturbation: gamma^n = gamma + c_hat / sqrt(n)

  std::size_t size() const { return classes.size(); }

  void validate() const {
    if (classes.empty()) throw std::invalid_argument("ArrivalModel: no classes");
    if (!c_hat.empty()) require_dim(c_hat.size(), classes.size(), "ArrivalModel c_hat");
    for (std::size_t j = 0; j < classes.size(); ++j) {
      if (!(classes[j].rate > 0.0) || !std::isfinite(classes[j].rate))
        throw std::invalid_argument("ArrivalModel: class " + std::to_string(j + 1) + " rate must be > 0");
      classes[j].work.validate("ArrivalModel class " + std::to_string(j + 1) + " work");
    }
  }

  Vec gamma() const {
    Vec g(size());
    for (std::size_t j = 0; j < size(); ++j) g[j] = classes[j].gamma();
    return g;
  }

  Vec gamma_n(double n) const {
    Vec g = gamma();
    if (!c_hat.empty())
      for (std::size_t j = 0; j < size(); ++j) g[j] += c_hat[j] / std::sqrt(n);
    for (std::size_t j = 0; j < size(); ++j)
      if (!(g[j] > 0.0)) throw std::invalid_argument("ArrivalModel: gamma^n must stay positive");
    return g;
  }

  /// Covariance rate of the centred cumulative work (the Brownian limit):
  /// lambda Var(W) + E[W]^2 lambda^3 Var(tau) on the diagonal, zero elsewhere.
  std::vector<Vec> covariance() const {
    std::vector<Vec> M(size(), Vec(size(), 0.0));
    for (std::size_t j = 0; j < size(); ++j) {
      const auto& c = classes[j];
      const double l = c.rate;
      const double var_tau = c.interarrival_law(l).variance();
      M[j][j] = l * c.work.variance() + c.work.mean() * c.work.mean() * l * l * l * var_tau;
    }
    return M;
  }

  /// Scales every work size by c and every event rate by 1/c: gamma is
  /// unchanged and the covariance scales by c. Chooses c so the covariance
  /// entries sum to `target`.
  ArrivalModel rescaled_to_aggregate_variance(double target) const {
    double total = 0.0;
    for (const auto& row : covariance())
      for (double x : row) total += x;
    if (!(total > 0.0)) throw std::invalid_argument("rescaled_to_aggregate_variance: zero covariance");
    const double c = target / total;
    ArrivalModel out = *this;
    for (auto& cl : out.classes) {
      cl.work = cl.work.scaled(c);
      cl.rate /= c;
    }
    return out;
  }
};

/// Lazily generated arrivals of one class on the accelerated clock.
class ClassStream {
 public:
  ClassStream(const ClassArrivals& spec, double gamma_n, Rng rng)
      : law_(spec.interarrival_law(spec.rate * gamma_n / spec.gamma())), work_(spec.work), rng_(std::move(rng)) {
    advance();
  }
  double next_time() const { return next_; }
  double next_work() const { return work_amount_; }
  void advance() {
    next_ += law_.sample(rng_);
    work_amount_ = work_.sample(rng_);
  }

 private:
  Distribution law_;
  Distribution work_;
  Rng rng_;
  double next_ = 0.0;
  double work_amount_ = 0.0;
};

/// Merges per-class streams in time order.
class ArrivalStreams {
 public:
  ArrivalStreams(const ArrivalModel& model, double n, std::uint64_t seed, std::uint64_t replication) {
    model.validate();
    const Vec g = model.gamma_n(n);
    streams_.reserve(model.size());
    for (std::size_t j = 0; j < model.size(); ++j)
      streams_.emplace_back(model.classes[j], g[j], make_stream(seed, replication, j));
  }

  std::size_t size() const { return streams_.size(); }

  /// Class of the earliest pending arrival (lowest index on ties).
  std::size_t peek() const {
    std::size_t best = 0;
    for (std::size_t j = 1; j < streams_.size(); ++j)
      if (streams_[j].next_time() < streams_[best].next_time()) best = j;
    return best;
  }
  double time(std::size_t j) const { return streams_[j].next_time(); }
  double work(std::size_t j) const { return streams_[j].next_work(); }
  void pop(std::size_t j) { streams_[j].advance(); }
  ClassStream& stream(std::size_t j) { return streams_[j]; }

 private:
  std::vector<ClassStream> streams_;
};

/// Cumulative work arrivals H on the accelerated clock [0, n * horizon] with
/// per-class work rate gamma + c_hat / sqrt(n). H(0) = 0; simultaneous
/// arrivals are merged into one jump.
inline StepPath gen_arrivals(const ArrivalModel& model, double n, double horizon, std::uint64_t seed,
                             std::uint64_t replication = 0) {
  if (!(n >= 1.0)) throw std::invalid_argument("gen_arrivals: n must be >= 1");
  ArrivalStreams streams(model, n, seed, replication);
  const std::size_t J = model.size();
  const double end = n * horizon;
  StepPath H(J, Vec(J, 0.0), end);
  Vec dv(J, 0.0);
  for (;;) {
    const std::size_t j = streams.peek();
    const double t = streams.time(j);
    if (t > end) break;
    std::fill(dv.begin(), dv.end(), 0.0);
    dv[j] = streams.work(j);
    H.add_jump(t, dv);
    streams.pop(j);
  }
  return H;
}

/// Path that is affine between breakpoints and right-continuous at jumps.
struct Segment {
  double t0;
  Vec jump;   // applied at t0
  Vec start;  // value at t0, after the jump
  Vec slope;
  double duration;
};

class HybridPath {
 public:
  HybridPath() = default;
  explicit HybridPath(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  const std::vector<Segment>& segments() const { return segments_; }
  double end_time() const { return segments_.empty() ? 0.0 : segments_.back().t0 + segments_.back().duration; }

  /// Appends a segment; a jump-free continuation with the same slope is
  /// folded into the previous segment.
  void append(double t0, std::span<const double> jump, std::span<const double> start, std::span<const double> slope,
              double duration) {
    if (!segments_.empty()) {
      Segment& last = segments_.back();
      const bool no_jump = std::all_of(jump.begin(), jump.end(), [](double x) { return x == 0.0; });
      if (no_jump && std::equal(slope.begin(), slope.end(), last.slope.begin())) {
        last.duration = (t0 + duration) - last.t0;
        return;
      }
    }
    segments_.push_back({t0, Vec(jump.begin(), jump.end()), Vec(start.begin(), start.end()),
                         Vec(slope.begin(), slope.end()), duration});
  }

  /// Value at t (right-continuous); t beyond the end extrapolates the last slope.
  Vec value_at(double t) const {
    if (segments_.empty()) throw std::logic_error("HybridPath: empty");
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double x, const Segment& s) { return x < s.t0; });
    const Segment& s = it == segments_.begin() ? segments_.front() : *std::prev(it);
    Vec v = s.start;
    const double dt = t - s.t0;
    for (std::size_t i = 0; i < dim_; ++i) v[i] += s.slope[i] * dt;
    return v;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Segment> segments_;
};

/// Exact GPS workload dynamics between arrivals: each linear piece drains
/// at the slope of the fluid map with drift -alpha, which equals
/// -alpha^E for the current empty set E.
class GpsEngine {
 public:
  GpsEngine(const GpsWeights& w, std::span<const double> u0, bool track_faces = false)
      : w_(w), solve_(w), neg_alpha_(w.size()), u_(u0.begin(), u0.end()), busy_(w.size(), 0.0), chi_(w.size()),
        track_faces_(track_faces) {
    require_dim(u0.size(), w.size(), "GpsEngine u0");
    for (double x : u_)
      if (x < 0.0) throw std::invalid_argument("GpsEngine: initial workload must be >= 0");
    for (std::size_t j = 0; j < w.size(); ++j) neg_alpha_[j] = -w.alpha(j);
  }

  double time() const { return t_; }
  const Vec& workload() const { return u_; }
  const Vec& busy() const { return busy_; }
  const std::map<ClassSet, double>& face_times() const { return faces_; }

  /// Drains up to time `target`. on_segment(t0, U(t0), slope, duration, E)
  /// is called for each linear piece.
  template <class OnSegment>
  void advance_to(double target, OnSegment&& on_segment) {
    const std::size_t J = u_.size();
    while (t_ < target) {
      ClassSet empty;
      for (std::size_t j = 0; j < J; ++j)
        if (u_[j] == 0.0) empty.insert(j);
      solve_(neg_alpha_, empty, chi_);
      double hit = std::numeric_limits<double>::infinity();
      std::size_t hitter = J;
      for (std::size_t j = 0; j < J; ++j) {
        if (u_[j] > 0.0 && chi_[j] < 0.0) {
          const double h = u_[j] / -chi_[j];
          if (h < hit) {
            hit = h;
            hitter = j;
          }
        }
      }
      const bool drains = t_ + hit <= target;
      const double dt = drains ? hit : target - t_;
      on_segment(t_, std::span<const double>(u_), std::span<const double>(chi_), dt, empty);
      if (track_faces_) faces_[empty] += dt;
      for (std::size_t j = 0; j < J; ++j) {
        u_[j] += chi_[j] * dt;
        busy_[j] -= chi_[j] * dt;
        if (u_[j] < 0.0 || (chi_[j] < 0.0 && u_[j] <= -chi_[j] * kAlgebraTol * std::max(1.0, dt))) u_[j] = 0.0;
      }
      if (drains) u_[hitter] = 0.0;
      t_ = drains ? t_ + dt : target;
    }
  }

  void advance_to(double target) {
    advance_to(target, [](double, std::span<const double>, std::span<const double>, double, ClassSet) {});
  }

  void arrive(std::size_t j, double work) { u_[j] += work; }
  void arrive(std::span<const double> dv) {
    for (std::size_t j = 0; j < u_.size(); ++j) u_[j] += dv[j];
  }

 private:
  GpsWeights w_;
  SlopeSolver solve_;
  Vec neg_alpha_;
  Vec u_;
  Vec busy_;
  Vec chi_;
  double t_ = 0.0;
  bool track_faces_;
  std::map<ClassSet, double> faces_;
};

enum class ScaleMode { fluid, diffusion };

struct ScaledSamples {
  std::vector<double> times;
  std::vector<Vec> values;
};

using PathFn = std::function<Vec(double)>;

/// Samples f^n on a uniform grid of scaled time: fluid mode gives
/// f(n t) / n; diffusion mode gives sqrt(n) (f(n t) / n - center(t)).
inline ScaledSamples scale(const PathFn& f, ScaleMode mode, double n, double horizon, std::size_t grid_per_unit,
                           const PathFn& center = nullptr) {
  if (mode == ScaleMode::diffusion && !center) throw std::invalid_argument("scale: diffusion mode needs a center");
  if (grid_per_unit == 0) throw std::invalid_argument("scale: grid must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(horizon * static_cast<double>(grid_per_unit)));
  ScaledSamples out;
  out.times.reserve(steps + 1);
  out.values.reserve(steps + 1);
  const double rn = std::sqrt(n);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(grid_per_unit);
    Vec v = f(n * t);
    for (double& x : v) x /= n;
    if (mode == ScaleMode::diffusion) {
      const Vec c = center(t);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = rn * (v[i] - c[i]);
    }
    out.times.push_back(t);
    out.values.push_back(std::move(v));
  }
  return out;
}

inline ScaledSamples scale(const HybridPath& p, ScaleMode mode, double n, double horizon, std::size_t grid_per_unit,
                           const PathFn& center = nullptr) {
  return scale([&p](double t) { return p.value_at(t); }, mode, n, horizon, grid_per_unit, center);
}

inline ScaledSamples scale(const StepPath& p, ScaleMode mode, double n, double horizon, std::size_t grid_per_unit,
                           const PathFn& center = nullptr) {
  return scale([&p](double t) { return p.value_at(t); }, mode, n, horizon, grid_per_unit, center);
}

/// Center t -> g * t.
inline PathFn linear_center(Vec g) {
  return [g = std::move(g)](double t) {
    Vec c = g;
    for (double& x : c) x *= t;
    return c;
  };
}

inline PathFn zero_center(std::size_t J) {
  return [J](double) { return Vec(J, 0.0); };
}

/// One simulated trajectory on the accelerated clock.
struct SimRun {
  double n = 1.0;
  std::uint64_t seed = 0;
  double horizon = 0.0;
  HybridPath U;  // workload
  HybridPath T;  // cumulative service per class
  HybridPath X;  // netput U(0) + H - alpha t
  std::map<ClassSet, double> face_times;
  ScaledSamples U_fluid;
  ScaledSamples U_diffusion;
  ScaledSamples T_diffusion;
};

/// Exact workload trajectory for initial work U0 and arrivals H on
/// [0, horizon].
inline SimRun gps_simulate(const GpsWeights& w, std::span<const double> U0, const StepPath& H, double horizon) {
  const std::size_t J = w.size();
  require_dim(H.dim(), J, "gps_simulate H");
  for (const auto& j : H.jumps())
    for (double x : j.dv)
      if (x < 0.0) throw std::invalid_argument("gps_simulate: arrivals must be nondecreasing");

  SimRun run;
  run.horizon = horizon;
  run.U = HybridPath(J);
  run.T = HybridPath(J);
  run.X = HybridPath(J);

  Vec u0(U0.begin(), U0.end());
  for (std::size_t j = 0; j < J; ++j) u0[j] += H.initial()[j];
  GpsEngine engine(w, u0, true);

  Vec pending_jump(J, 0.0);
  Vec neg_alpha(J);
  for (std::size_t j = 0; j < J; ++j) neg_alpha[j] = -w.alpha(j);
  Vec busy_slope(J);
  auto record = [&](double t0, std::span<const double> u, std::span<const double> slope, double dt, ClassSet) {
    run.U.append(t0, pending_jump, u, slope, dt);
    for (std::size_t j = 0; j < J; ++j) busy_slope[j] = -slope[j];
    run.T.append(t0, Vec(J, 0.0), engine.busy(), busy_slope, dt);
    std::fill(pending_jump.begin(), pending_jump.end(), 0.0);
  };

  Vec x = u0;
  double tx = 0.0;
  Vec xjump(J, 0.0);
  for (const auto& jump : H.jumps()) {
    if (jump.t > horizon) break;
    engine.advance_to(jump.t, record);
    run.X.append(tx, xjump, x, neg_alpha, jump.t - tx);
    for (std::size_t j = 0; j < J; ++j) x[j] += neg_alpha[j] * (jump.t - tx) + jump.dv[j];
    xjump = jump.dv;
    tx = jump.t;
    engine.arrive(jump.dv);
    for (std::size_t j = 0; j < J; ++j) pending_jump[j] += jump.dv[j];
  }
  engine.advance_to(horizon, record);
  if (tx < horizon || run.X.segments().empty()) run.X.append(tx, xjump, x, neg_alpha, horizon - tx);
  const bool pending = std::any_of(pending_jump.begin(), pending_jump.end(), [](double x) { return x != 0.0; });
  if (run.U.segments().empty() || run.U.end_time() < horizon || pending) {
    // Zero-length tail so an arrival at the horizon is represented.
    Vec z(J, 0.0);
    run.U.append(horizon, pending_jump, engine.workload(), z, 0.0);
    run.T.append(horizon, z, engine.busy(), z, 0.0);
  }
  run.face_times = engine.face_times();
  return run;
}

/// Departure process of a single-server queue fed by H_j with service rate
/// gamma_tilde_j, for every j in S; other classes pass through unchanged.
/// The S-components are continuous with slope gamma_tilde_j while their
/// queue is busy and zero otherwise.
inline HybridPath modify_arrivals(const StepPath& H, std::span<const double> gamma_tilde, ClassSet S) {
  const std::size_t J = H.dim();
  require_dim(gamma_tilde.size(), J, "modify_arrivals");
  for (auto j : S.members())
    if (!(gamma_tilde[j] > 0.0)) throw std::invalid_argument("modify_arrivals: gamma_tilde must be > 0 on S");

  HybridPath out(J);
  Vec q(J, 0.0), value(J, 0.0), slope(J, 0.0), jump(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    if (S.contains(j))
      q[j] = H.initial()[j];
    else
      value[j] = H.initial()[j];
  }
  double t = 0.0;
  auto run_until = [&](double target) {
    while (t < target) {
      double next = target;
      for (auto j : S.members())
        if (q[j] > 0.0) next = std::min(next, t + q[j] / gamma_tilde[j]);
      for (std::size_t j = 0; j < J; ++j) slope[j] = (S.contains(j) && q[j] > 0.0) ? gamma_tilde[j] : 0.0;
      out.append(t, jump, value, slope, next - t);
      std::fill(jump.begin(), jump.end(), 0.0);
      for (auto j : S.members()) {
        if (q[j] <= 0.0) continue;
        const double served = gamma_tilde[j] * (next - t);
        if (served >= q[j] || t + q[j] / gamma_tilde[j] <= next) {
          value[j] += q[j];
          q[j] = 0.0;
        } else {
          value[j] += served;
          q[j] -= served;
        }
      }
      t = next;
    }
  };
  for (const auto& jmp : H.jumps()) {
    run_until(jmp.t);
    for (std::size_t j = 0; j < J; ++j) {
      if (S.contains(j)) {
        q[j] += jmp.dv[j];
      } else {
        value[j] += jmp.dv[j];
        jump[j] += jmp.dv[j];
      }
    }
  }
  run_until(H.horizon());
  if (out.segments().empty() || std::any_of(jump.begin(), jump.end(), [](double x) { return x != 0.0; }))
    out.append(t, jump, value, Vec(J, 0.0), 0.0);
  return out;
}

}  // namespace gps
