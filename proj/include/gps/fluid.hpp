#pragma once

// Fluid limits: the GPS map applied to affine inputs u0 + nu*t, the set of
// strictly subcritical classes and the invariant manifold.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "gps/geometry.hpp"
#include "gps/types.hpp"

namespace gps {

/// Slope of the reflected affine path at a state whose empty classes are
/// `zero_set`. Only classes in zero_set may be clamped; the excess rate is
/// taken from every unclamped class in proportion to beta. Reusable scratch.
class SlopeSolver {
 public:
  explicit SlopeSolver(const GpsWeights& w) : beta_(w.beta()), order_(w.size()), ratio_(w.size()) {}

  /// Writes chi; returns the clamp set.
  ClassSet operator()(std::span<const double> nu, ClassSet zero_set, std::span<double> chi) {
    const std::size_t J = beta_.size();
    if (zero_set.is_full(J) && sum(nu) < 0.0) {
      std::fill(chi.begin(), chi.end(), 0.0);
      return zero_set;
    }
    std::size_t m = 0;
    for (std::size_t j = 0; j < J; ++j) {
      if (!zero_set.contains(j)) continue;
      order_[m++] = j;
      ratio_[j] = nu[j] / beta_[j];
    }
    std::sort(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(m), [&](std::size_t a, std::size_t b) {
      return ratio_[a] < ratio_[b] || (ratio_[a] == ratio_[b] && a < b);
    });
    double clamped_nu = 0.0;
    double clamped_beta = 0.0;
    double rate = 0.0;
    ClassSet clamped;
    for (std::size_t k = 0; k < m && clamped.size() + 1 < J; ++k) {
      const std::size_t j = order_[k];
      if (!(ratio_[j] < rate)) break;
      clamped_nu += nu[j];
      clamped_beta += beta_[j];
      rate = -clamped_nu / (1.0 - clamped_beta);
      clamped.insert(j);
    }
    for (std::size_t j = 0; j < J; ++j) chi[j] = clamped.contains(j) ? 0.0 : nu[j] - beta_[j] * rate;
    return clamped;
  }

 private:
  Vec beta_;
  std::vector<std::size_t> order_;
  Vec ratio_;
};

/// Slope chi of Gamma(u + nu t) right after a state with empty set zero_set.
inline Vec restricted_project(const GpsWeights& w, std::span<const double> nu, ClassSet zero_set) {
  require_dim(nu.size(), w.size(), "restricted_project");
  Vec chi(w.size());
  SlopeSolver solve(w);
  solve(nu, zero_set, chi);
  return chi;
}

struct FluidEpoch {
  double t;
  Vec u;          // state at the start of the epoch
  Vec chi;        // slope during the epoch
  ClassSet empty; // classes held at zero for the whole epoch
};

struct FluidTrajectory {
  std::vector<FluidEpoch> epochs;
  Vec kappa;  // slope of the final epoch
  double absorption_time = std::numeric_limits<double>::infinity();
  double horizon = 0.0;

  Vec state_at(double t) const {
    auto it = std::upper_bound(epochs.begin(), epochs.end(), t,
                               [](double x, const FluidEpoch& e) { return x < e.t; });
    const FluidEpoch& e = it == epochs.begin() ? epochs.front() : *std::prev(it);
    Vec u = e.u;
    const double dt = std::max(0.0, t - e.t);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::max(0.0, u[i] + e.chi[i] * dt);
    return u;
  }
};

/// The classes that are strictly subcritical for drift nu and the face
/// M(nu) = {x >= 0 : x_j = 0 for j in S} that the fluid limit settles on.
struct SubcriticalReport {
  Vec nu;
  ClassSet S;
  ClassSet M_free;  // coordinates left free on the invariant manifold
  std::optional<double> r_S;  // excess rate; absent when sum(nu) < 0
  Vec kappa;                  // pi(nu)
  ConeDecomposition theta;    // decomposition of kappa - nu
};

namespace detail {

// Total drift within this band counts as exactly zero (heavy traffic).
inline double drift_total(std::span<const double> nu) {
  const double s = sum(nu);
  return std::abs(s) <= kAlgebraTol * static_cast<double>(nu.size()) * std::max(1.0, max_abs(nu)) ? 0.0 : s;
}

inline double excess_rate(const GpsWeights& w, std::span<const double> nu, ClassSet S) {
  double sn = 0.0, sb = 0.0;
  for (auto j : S.members()) {
    sn += nu[j];
    sb += w.beta(j);
  }
  return S.empty() ? 0.0 : -sn / (1.0 - sb);
}

}  // namespace detail

/// Clamp set characterized purely by rates: the unique S != I with
/// r_S > 0 and (nu_j / beta_j < r_S iff j in S), found by enumeration.
/// Empty when no nonempty set qualifies; the full set when sum(nu) < 0.
inline ClassSet subcritical_set_by_rates(const GpsWeights& w, std::span<const double> nu) {
  const std::size_t J = w.size();
  require_dim(nu.size(), J, "subcritical_set_by_rates");
  if (J > 20) throw std::invalid_argument("subcritical_set_by_rates: J > 20");
  if (detail::drift_total(nu) < 0.0) return ClassSet::all(J);
  const std::uint64_t full = ClassSet::all(J).bits();
  std::optional<ClassSet> found;
  for (std::uint64_t bits = 1; bits < full; ++bits) {
    const ClassSet S(bits);
    const double r = detail::excess_rate(w, nu, S);
    if (!(r > 0.0)) continue;
    bool ok = true;
    for (std::size_t j = 0; j < J && ok; ++j) ok = (nu[j] / w.beta(j) < r) == S.contains(j);
    if (!ok) continue;
    if (found) throw NumericError("subcritical_set_by_rates: clamp set is not unique");
    found = S;
  }
  return found.value_or(ClassSet{});
}

/// Checks the rate characterization for a given S: r_S > 0 (when S is
/// nonempty) and nu_j / beta_j < r_S exactly for j in S, up to `tol`.
inline bool satisfies_rate_conditions(const GpsWeights& w, std::span<const double> nu, ClassSet S,
                                      double tol = kAlgebraTol) {
  const double r = detail::excess_rate(w, nu, S);
  if (!S.empty() && !(r > 0.0)) return false;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double ratio = nu[j] / w.beta(j);
    if (S.contains(j) ? !(ratio < r + tol) : !(ratio >= r - tol)) return false;
  }
  return true;
}

/// Strictly subcritical classes for the drift nu = gamma - alpha (given
/// directly). The coefficient route (theta_j > 0) is cross-checked against
/// the rate conditions; disagreement throws NumericError.
inline SubcriticalReport subcritical_from_drift(const GpsWeights& w, std::span<const double> nu_in) {
  const std::size_t J = w.size();
  require_dim(nu_in.size(), J, "subcritical_analysis");
  SubcriticalReport rep;
  rep.nu.assign(nu_in.begin(), nu_in.end());
  const double total = detail::drift_total(rep.nu);
  if (total < 0.0) {
    rep.S = ClassSet::all(J);
    rep.kappa.assign(J, 0.0);
    Vec push(J);
    for (std::size_t j = 0; j < J; ++j) push[j] = -rep.nu[j];
    rep.theta = hyperplane_decompose(w, push, OriginDirection::allowed);
  } else {
    rep.kappa = total == 0.0 ? Vec(J, 0.0) : project(w, rep.nu);
    Vec push(J);
    for (std::size_t j = 0; j < J; ++j) push[j] = rep.kappa[j] - rep.nu[j];
    const double scale = std::max(1.0, max_abs(rep.nu));
    const double s = sum(push);
    // kappa - nu lies on the hyperplane; strip rounding off its normal part.
    if (std::abs(s) <= kAlgebraTol * static_cast<double>(J) * scale)
      for (double& x : push) x -= s / static_cast<double>(J);
    rep.theta = hyperplane_decompose(w, push, OriginDirection::forbidden, 1e-10);
    rep.S = rep.theta.active;
    rep.r_S = detail::excess_rate(w, rep.nu, rep.S);
    if (!satisfies_rate_conditions(w, rep.nu, rep.S, 1e-9 * scale))
      throw NumericError("subcritical_analysis: coefficient route gives " + rep.S.to_string() +
                         ", which fails the rate conditions");
  }
  rep.M_free = rep.S.complement(J);
  return rep;
}

/// Analysis for long-run work arrival rates gamma (nu = gamma - alpha).
inline SubcriticalReport subcritical_analysis(const GpsWeights& w, std::span<const double> gamma) {
  require_dim(gamma.size(), w.size(), "subcritical_analysis");
  Vec nu(gamma.size());
  for (std::size_t j = 0; j < nu.size(); ++j) {
    if (gamma[j] < 0.0) throw std::invalid_argument("subcritical_analysis: gamma must be >= 0");
    nu[j] = gamma[j] - w.alpha(j);
  }
  return subcritical_from_drift(w, nu);
}

inline bool in_manifold(const SubcriticalReport& rep, std::span<const double> x, double tol = kStateTol) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < -tol) return false;
    if (rep.S.contains(j) && x[j] > tol) return false;
  }
  return true;
}

/// Identities that hold in critical load (sum(nu) = 0, min nu < 0): kappa = 0,
/// every critical class has nu_j = -beta_j sum_S nu / (1 - sum_S beta), and
/// the critical classes share one ratio nu_j / beta_j. Vacuously true
/// outside that regime.
inline bool verify_critical_identities(const GpsWeights& w, const SubcriticalReport& rep, double tol = kAlgebraTol) {
  const std::size_t J = w.size();
  if (detail::drift_total(rep.nu) != 0.0) return true;
  if (*std::min_element(rep.nu.begin(), rep.nu.end()) >= 0.0) return true;
  if (rep.S.is_full(J)) return false;
  for (double k : rep.kappa)
    if (std::abs(k) > tol) return false;
  double sn = 0.0, sb = 0.0;
  for (auto j : rep.S.members()) {
    sn += rep.nu[j];
    sb += w.beta(j);
  }
  std::optional<double> common;
  for (std::size_t j = 0; j < J; ++j) {
    if (rep.S.contains(j)) continue;
    if (std::abs(rep.nu[j] - (-w.beta(j) * sn / (1.0 - sb))) > tol) return false;
    const double ratio = rep.nu[j] / w.beta(j);
    if (common && std::abs(ratio - *common) > tol * std::max(1.0, std::abs(ratio))) return false;
    common = ratio;
  }
  return true;
}

/// Piecewise-affine solution of Gamma(u0 + nu t) on [0, horizon].
///
/// Each epoch recomputes the empty set from the state, takes the slope from
/// restricted_project and runs until the next positive class drains.
/// Classes that drain simultaneously enter the empty set together.
inline FluidTrajectory fluid_solve(const GpsWeights& w, std::span<const double> u0, std::span<const double> nu,
                                   double horizon) {
  const std::size_t J = w.size();
  require_dim(u0.size(), J, "fluid_solve u0");
  require_dim(nu.size(), J, "fluid_solve nu");
  for (double x : u0)
    if (x < 0.0) throw std::invalid_argument("fluid_solve: u0 must be >= 0");
  const double tol = kStateTol * std::max(1.0, max_abs(u0));

  FluidTrajectory traj;
  traj.horizon = horizon;
  SlopeSolver solve(w);
  Vec u(u0.begin(), u0.end());
  Vec chi(J);
  double t = 0.0;
  for (std::size_t guard = 0; guard <= J + 1; ++guard) {
    ClassSet zero;
    for (std::size_t j = 0; j < J; ++j) {
      if (u[j] <= tol) {
        u[j] = 0.0;
        zero.insert(j);
      }
    }
    solve(nu, zero, chi);
    ClassSet held;
    for (auto j : zero.members())
      if (chi[j] == 0.0) held.insert(j);
    traj.epochs.push_back({t, u, chi, held});

    double hit = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < J; ++j)
      if (u[j] > 0.0 && chi[j] < 0.0) hit = std::min(hit, u[j] / -chi[j]);
    if (!(t + hit < horizon)) break;
    for (std::size_t j = 0; j < J; ++j) {
      u[j] += chi[j] * hit;
      if (u[j] > 0.0 && chi[j] < 0.0 && u[j] / -chi[j] <= kAlgebraTol * hit) u[j] = 0.0;
    }
    t += hit;
  }
  traj.kappa = traj.epochs.back().chi;

  // Absorption: first epoch after which every subcritical class stays at 0.
  const auto rep = subcritical_from_drift(w, nu);
  for (std::size_t k = traj.epochs.size(); k-- > 0;) {
    const auto& e = traj.epochs[k];
    if (!rep.S.subset_of(e.empty)) break;
    traj.absorption_time = e.t;
  }
  return traj;
}

}  // namespace gps
