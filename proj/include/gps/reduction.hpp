#pragma once

// Reduction of the GPS map to the critical classes once the subcritical
// ones are pinned at zero.

#include <algorithm>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "gps/geometry.hpp"
#include "gps/skorokhod.hpp"
#include "gps/types.hpp"

namespace gps {

/// GPS weights restricted to K = I \ S, with beta renormalized over K and
/// alpha lifted so that the freed base capacity of S is shared by beta.
struct ReducedSystem {
  GpsWeights parent;
  ClassSet S;
  std::vector<std::size_t> K_index;  // critical classes in increasing order
  GpsWeights reduced;

  std::size_t size() const { return K_index.size(); }
  const Vec& beta_K() const { return reduced.beta(); }
  const Vec& alpha_K() const { return reduced.alpha(); }
};

namespace detail {

inline Vec lift_with(const Vec& beta_K, const std::vector<std::size_t>& K, ClassSet S, std::span<const double> v) {
  double s = 0.0;
  for (auto j : S.members()) s += v[j];
  Vec out(K.size());
  for (std::size_t m = 0; m < K.size(); ++m) out[m] = v[K[m]] + beta_K[m] * s;
  return out;
}

}  // namespace detail

inline ReducedSystem reduced_weights(const GpsWeights& w, ClassSet S) {
  const std::size_t J = w.size();
  if (S.is_full(J)) throw std::invalid_argument("reduced_weights: S must be a proper subset");
  if (!S.subset_of(ClassSet::all(J))) throw std::invalid_argument("reduced_weights: S has indices >= J");
  if (S.empty()) return {w, S, S.complement(J).members(), w};

  const auto K = S.complement(J).members();
  double kb = 0.0;
  for (auto k : K) kb += w.beta(k);
  Vec beta_K(K.size());
  for (std::size_t m = 0; m < K.size(); ++m) beta_K[m] = w.beta(K[m]) / kb;
  Vec alpha_K = detail::lift_with(beta_K, K, S, w.alpha());
  for (double& a : alpha_K) a = std::min(a, 1.0);  // rounding when K is a singleton
  return {w, S, K, GpsWeights(std::move(alpha_K), std::move(beta_K))};
}

/// [L v]_i = v_i + beta^K_i * sum_{j in S} v_j for i in K.
inline Vec lift(const ReducedSystem& sys, std::span<const double> v) {
  require_dim(v.size(), sys.parent.size(), "lift");
  if (sys.S.empty()) return Vec(v.begin(), v.end());
  return detail::lift_with(sys.beta_K(), sys.K_index, sys.S, v);
}

inline Vec lift(const GpsWeights& w, ClassSet S, std::span<const double> v) { return lift(reduced_weights(w, S), v); }

/// Lift applied at every time of a step path.
inline StepPath lift(const ReducedSystem& sys, const StepPath& f) {
  StepPath out(sys.size(), lift(sys, f.initial()), f.horizon());
  for (const auto& j : f.jumps()) out.add_jump(j.t, lift(sys, j.dv));
  return out;
}

inline GridPath lift(const ReducedSystem& sys, const GridPath& f) {
  require_dim(f.dim, sys.parent.size(), "lift");
  GridPath out(f.dt, sys.size(), f.points() - 1);
  for (std::size_t k = 0; k < f.points(); ++k) {
    const Vec r = lift(sys, f.row(k));
    std::copy(r.begin(), r.end(), out.row(k).begin());
  }
  return out;
}

struct EquivalenceReport {
  bool window_valid = true;
  double window_end = std::numeric_limits<double>::infinity();  // first time phi leaves the S-face
  double max_error = 0.0;  // sup distance between restricted and reduced reflections on the window
  bool agrees = true;
};

/// Reflects psi in full dimension, restricts to K, and compares with the
/// reduced reflection of the lifted input on the window where every class
/// of S stays empty. If phi leaves the S-face the window is marked invalid
/// and only the prefix before that time is compared.
inline EquivalenceReport reduced_sm_equiv_check(const GpsWeights& w, ClassSet S, const StepPath& psi,
                                                double tol = kStateTol) {
  const auto sys = reduced_weights(w, S);
  const StepPath phi = sm_step(w, psi);
  const StepPath phi_K = sm_step(sys.reduced, lift(sys, psi));

  EquivalenceReport rep;
  const auto ts = phi.times();
  const auto full = phi.values();
  const auto red = phi_K.values();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    bool on_face = true;
    for (auto j : S.members()) on_face = on_face && std::abs(full[k][j]) <= tol;
    if (!on_face) {
      rep.window_valid = false;
      rep.window_end = ts[k];
      break;
    }
    for (std::size_t m = 0; m < sys.size(); ++m)
      rep.max_error = std::max(rep.max_error, std::abs(full[k][sys.K_index[m]] - red[k][m]));
  }
  rep.agrees = rep.max_error <= tol;
  return rep;
}

}  // namespace gps
