#pragma once

// Skorokhod maps: the one-dimensional reflection and the GPS map on
// piecewise-constant paths, plus a checker for the defining properties.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gps/geometry.hpp"
#include "gps/types.hpp"

namespace gps {

struct Jump {
  double t;
  Vec dv;
};

/// Right-continuous piecewise-constant path with finitely many jumps.
class StepPath {
 public:
  StepPath() = default;
  StepPath(std::size_t dim, Vec initial, double horizon)
      : dim_(dim), initial_(std::move(initial)), horizon_(horizon) {
    require_dim(initial_.size(), dim_, "StepPath initial value");
    if (!(horizon_ >= 0.0)) throw std::invalid_argument("StepPath: negative horizon");
  }

  /// Appends a jump. A jump at the time of the previous one is merged into it.
  void add_jump(double t, Vec dv) {
    require_dim(dv.size(), dim_, "StepPath jump");
    if (!(t > 0.0) || t > horizon_) throw std::invalid_argument("StepPath: jump time outside (0, horizon]");
    if (!jumps_.empty()) {
      if (t < jumps_.back().t) throw std::invalid_argument("StepPath: jump times must increase");
      if (t == jumps_.back().t) {
        for (std::size_t i = 0; i < dim_; ++i) jumps_.back().dv[i] += dv[i];
        return;
      }
    }
    jumps_.push_back({t, std::move(dv)});
  }

  std::size_t dim() const { return dim_; }
  const Vec& initial() const { return initial_; }
  const std::vector<Jump>& jumps() const { return jumps_; }
  double horizon() const { return horizon_; }

  /// Value at t (right-continuous).
  Vec value_at(double t) const {
    Vec v = initial_;
    for (const auto& j : jumps_) {
      if (j.t > t) break;
      for (std::size_t i = 0; i < dim_; ++i) v[i] += j.dv[i];
    }
    return v;
  }

  /// Time 0 followed by every jump time.
  std::vector<double> times() const {
    std::vector<double> ts{0.0};
    for (const auto& j : jumps_) ts.push_back(j.t);
    return ts;
  }

  /// Values at `times()`, i.e. right after each jump.
  std::vector<Vec> values() const {
    std::vector<Vec> out;
    out.reserve(jumps_.size() + 1);
    out.push_back(initial_);
    for (const auto& j : jumps_) {
      Vec v = out.back();
      for (std::size_t i = 0; i < dim_; ++i) v[i] += j.dv[i];
      out.push_back(std::move(v));
    }
    return out;
  }

  /// The path restricted to [0, t].
  StepPath truncated(double t) const {
    StepPath p(dim_, initial_, std::min(t, horizon_));
    for (const auto& j : jumps_) {
      if (j.t > t) break;
      p.jumps_.push_back(j);
    }
    return p;
  }

  /// Pointwise sum; jump times are merged.
  friend StepPath operator+(const StepPath& a, const StepPath& b) {
    require_dim(b.dim_, a.dim_, "StepPath sum");
    Vec init(a.dim_);
    for (std::size_t i = 0; i < a.dim_; ++i) init[i] = a.initial_[i] + b.initial_[i];
    StepPath out(a.dim_, std::move(init), std::max(a.horizon_, b.horizon_));
    std::size_t ia = 0, ib = 0;
    while (ia < a.jumps_.size() || ib < b.jumps_.size()) {
      const bool take_a = ib == b.jumps_.size() || (ia < a.jumps_.size() && a.jumps_[ia].t <= b.jumps_[ib].t);
      const Jump& j = take_a ? a.jumps_[ia++] : b.jumps_[ib++];
      out.add_jump(j.t, j.dv);
    }
    return out;
  }

  /// Step path through grid samples values[k] at times k*dt.
  static StepPath from_samples(double dt, const std::vector<Vec>& values) {
    if (values.empty()) throw std::invalid_argument("StepPath::from_samples: no samples");
    const std::size_t d = values.front().size();
    StepPath p(d, values.front(), dt * static_cast<double>(values.size() - 1));
    for (std::size_t k = 1; k < values.size(); ++k) {
      Vec dv(d);
      for (std::size_t i = 0; i < d; ++i) dv[i] = values[k][i] - values[k - 1][i];
      p.jumps_.push_back({dt * static_cast<double>(k), std::move(dv)});
    }
    return p;
  }

 private:
  std::size_t dim_ = 0;
  Vec initial_;
  std::vector<Jump> jumps_;
  double horizon_ = 0.0;
};

/// Uniformly sampled path: row k holds the value at time k*dt.
struct GridPath {
  double dt = 0.0;
  std::size_t dim = 0;
  std::vector<double> data;  // row-major, (steps + 1) x dim

  GridPath() = default;
  GridPath(double step, std::size_t d, std::size_t steps) : dt(step), dim(d), data((steps + 1) * d, 0.0) {}

  std::size_t points() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<double> row(std::size_t k) { return {data.data() + k * dim, dim}; }
  std::span<const double> row(std::size_t k) const { return {data.data() + k * dim, dim}; }
  double time(std::size_t k) const { return dt * static_cast<double>(k); }
};

/// One-dimensional reflection of grid samples: f + max(0, sup_{s<=t} -f(s)).
inline Vec sm1(std::span<const double> f) {
  Vec out(f.size());
  double push = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    push = std::max(push, -f[k]);
    out[k] = f[k] + push;
  }
  return out;
}

/// One-dimensional reflection of a scalar step path; the running supremum
/// only changes at jumps, so the result is again a step path.
inline StepPath sm1(const StepPath& f) {
  require_dim(f.dim(), 1, "sm1");
  const auto vals = f.values();
  Vec flat(vals.size());
  for (std::size_t k = 0; k < vals.size(); ++k) flat[k] = vals[k][0];
  const Vec r = sm1(flat);
  StepPath out(1, {r[0]}, f.horizon());
  for (std::size_t k = 1; k < r.size(); ++k) out.add_jump(f.jumps()[k - 1].t, {r[k] - r[k - 1]});
  return out;
}

/// Applies the projection recursion phi(t_{k+1}) = pi(phi(t_k) + dpsi_k)
/// in place, reusing scratch space.
class SkorokhodStepper {
 public:
  explicit SkorokhodStepper(const GpsWeights& w) : proj_(w), scratch_(w.size()) {}

  void start(std::span<const double> psi0, std::span<double> phi) { proj_(psi0, phi); }

  void step(std::span<double> phi, std::span<const double> dpsi) {
    for (std::size_t i = 0; i < phi.size(); ++i) scratch_[i] = phi[i] + dpsi[i];
    proj_(scratch_, phi);
  }

 private:
  Projector proj_;
  Vec scratch_;
};

/// The GPS Skorokhod map on a step path. The output has a (possibly zero)
/// jump at every jump time of the input.
inline StepPath sm_step(const GpsWeights& w, const StepPath& psi) {
  require_dim(psi.dim(), w.size(), "sm_step");
  SkorokhodStepper stepper(w);
  Vec phi(w.size());
  stepper.start(psi.initial(), phi);
  StepPath out(w.size(), phi, psi.horizon());
  Vec prev = phi;
  Vec dphi(w.size());
  for (const auto& j : psi.jumps()) {
    stepper.step(phi, j.dv);
    for (std::size_t i = 0; i < phi.size(); ++i) dphi[i] = phi[i] - prev[i];
    out.add_jump(j.t, dphi);
    prev = phi;
  }
  return out;
}

/// The GPS map applied to grid samples (same recursion as sm_step).
inline GridPath sm_grid(const GpsWeights& w, const GridPath& psi) {
  require_dim(psi.dim, w.size(), "sm_grid");
  GridPath out = psi;
  const std::size_t n = psi.points();
  if (n == 0) return out;
  SkorokhodStepper stepper(w);
  stepper.start(psi.row(0), out.row(0));
  Vec dpsi(psi.dim);
  for (std::size_t k = 1; k < n; ++k) {
    auto prev = out.row(k - 1);
    auto cur = out.row(k);
    std::copy(prev.begin(), prev.end(), cur.begin());
    for (std::size_t i = 0; i < psi.dim; ++i) dpsi[i] = psi.row(k)[i] - psi.row(k - 1)[i];
    stepper.step(cur, dpsi);
  }
  return out;
}

struct Violation {
  double t;
  int property;  // numbering of the defining properties: 2 orthant, 4 boundary, 5 direction
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks that (phi, phi - psi) solves the GPS Skorokhod problem for psi at
/// jump resolution: phi stays in the orthant, the constraining term moves
/// only on the boundary, and each of its increments lies in the cone of the
/// directions of the faces phi occupies (origin direction only at 0).
inline ValidationReport validate_sp(const GpsWeights& w, const StepPath& psi, const StepPath& phi,
                                    double tol = kStateTol) {
  const std::size_t J = w.size();
  require_dim(psi.dim(), J, "validate_sp psi");
  require_dim(phi.dim(), J, "validate_sp phi");
  if (psi.jumps().size() != phi.jumps().size())
    throw std::invalid_argument("validate_sp: psi and phi have different jump sets");

  ValidationReport rep;
  const auto ts = psi.times();
  const auto pv = psi.values();
  const auto fv = phi.values();
  Vec deta(J);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (k > 0 && phi.jumps()[k - 1].t != psi.jumps()[k - 1].t)
      throw std::invalid_argument("validate_sp: jump times differ");
    const Vec& f = fv[k];
    for (std::size_t i = 0; i < J; ++i) {
      if (f[i] < -tol) rep.violations.push_back({ts[k], 2, "phi[" + std::to_string(i) + "] < 0"});
    }
    for (std::size_t i = 0; i < J; ++i) {
      deta[i] = k == 0 ? f[i] - pv[0][i] : (f[i] - fv[k - 1][i]) - (pv[k][i] - pv[k - 1][i]);
    }
    if (max_abs(deta) <= tol) continue;

    ClassSet faces;
    for (std::size_t i = 0; i < J; ++i)
      if (std::abs(f[i]) <= tol) faces.insert(i);
    if (faces.empty()) {
      rep.violations.push_back({ts[k], 4, "constraining term moved in the interior"});
      continue;
    }
    const bool at_origin = faces.is_full(J);
    try {
      const auto dec = hyperplane_decompose(w, deta, at_origin ? OriginDirection::allowed : OriginDirection::forbidden,
                                            tol);
      if (!dec.active.subset_of(faces))
        rep.violations.push_back(
            {ts[k], 5, "increment uses direction outside faces " + faces.to_string() + ": " + dec.active.to_string()});
    } catch (const InfeasibleError& e) {
      rep.violations.push_back({ts[k], 5, e.what()});
    }
  }
  return rep;
}

/// Result of the sawtooth construction on which the cumulative direction
/// coefficients blow up while the input shrinks to zero.
struct OscillationDemo {
  StepPath path;
  Vec xi;  // accumulated coefficients of d_1, d_2, d_3
  double sup_norm = 0.0;
};

/// Two classes with beta = (1/2, 1/2): the input zigzags along -d_1 and
/// -d_2 with speed 2^n / n on 2^n half-periods of [0, 1], discretized at its
/// breakpoints. Reflection keeps phi at the origin and every increment of
/// the constraining term is decomposed and accumulated.
inline OscillationDemo oscillation_demo(int n) {
  if (n < 1 || n > 20) throw std::invalid_argument("oscillation_demo: n must be in [1, 20]");
  const GpsWeights w({0.5, 0.5}, {0.5, 0.5});
  const std::size_t halves = std::size_t{1} << n;
  const double dt = std::ldexp(1.0, -n);
  const double a = 1.0 / n;  // displacement per half-period: (2^n / n) * 2^-n

  OscillationDemo out{StepPath(2, {0.0, 0.0}, 1.0), Vec(3, 0.0), 0.0};
  for (std::size_t k = 1; k <= halves; ++k) {
    const double t = dt * static_cast<double>(k);
    if (k % 2 == 1)
      out.path.add_jump(t, {-a, a});
    else
      out.path.add_jump(t, {a, -a});
  }
  for (const auto& v : out.path.values()) out.sup_norm = std::max(out.sup_norm, std::hypot(v[0], v[1]));

  const StepPath phi = sm_step(w, out.path);
  // Neumaier summation keeps the 2^(n-1) identical terms exact.
  Vec comp(3, 0.0);
  const auto pv = out.path.values();
  const auto fv = phi.values();
  for (std::size_t k = 1; k < pv.size(); ++k) {
    Vec deta(2);
    for (std::size_t i = 0; i < 2; ++i) deta[i] = (fv[k][i] - fv[k - 1][i]) - (pv[k][i] - pv[k - 1][i]);
    const bool at_origin = fv[k][0] == 0.0 && fv[k][1] == 0.0;
    const auto dec = hyperplane_decompose(w, deta, at_origin ? OriginDirection::allowed : OriginDirection::forbidden);
    for (std::size_t i = 0; i < 3; ++i) {
      const double s = out.xi[i] + dec.theta[i];
      comp[i] += std::abs(out.xi[i]) >= std::abs(dec.theta[i]) ? (out.xi[i] - s) + dec.theta[i]
                                                                : (dec.theta[i] - s) + out.xi[i];
      out.xi[i] = s;
    }
  }
  for (std::size_t i = 0; i < 3; ++i) out.xi[i] += comp[i];
  return out;
}

}  // namespace gps
