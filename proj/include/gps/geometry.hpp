#pragma once

// GPS weights, the allocation rule, directions of constraint and the
// projection onto the orthant along those directions.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gps/types.hpp"

namespace gps {

/// Base weights alpha (guaranteed capacity fractions) and redistribution
/// weights beta (how surplus from empty classes is shared).
///
/// A single class (J = 1) is accepted with alpha = beta = (1); it arises as
/// the reduced system over one critical class.
class GpsWeights {
 public:
  GpsWeights(Vec alpha, Vec beta) : alpha_(std::move(alpha)), beta_(std::move(beta)) { validate(); }

  std::size_t size() const { return alpha_.size(); }
  const Vec& alpha() const { return alpha_; }
  const Vec& beta() const { return beta_; }
  double alpha(std::size_t i) const { return alpha_[i]; }
  double beta(std::size_t i) const { return beta_[i]; }

  friend bool operator==(const GpsWeights&, const GpsWeights&) = default;

 private:
  void validate() const {
    const std::size_t J = alpha_.size();
    if (J == 0 || J > kMaxClasses) throw std::invalid_argument("GpsWeights: class count must be in [1, 64]");
    if (beta_.size() != J) throw std::invalid_argument("GpsWeights: alpha and beta differ in length");
    for (std::size_t i = 0; i < J; ++i) {
      if (!std::isfinite(alpha_[i]) || alpha_[i] < 0.0 || alpha_[i] > 1.0)
        throw std::invalid_argument("GpsWeights: alpha[" + std::to_string(i) + "] outside [0,1]");
      if (!std::isfinite(beta_[i]) || beta_[i] <= 0.0)
        throw std::invalid_argument("GpsWeights: beta[" + std::to_string(i) + "] must be > 0");
      if (J >= 2 && beta_[i] >= 1.0)
        throw std::invalid_argument("GpsWeights: beta[" + std::to_string(i) + "] must be < 1");
    }
    if (std::abs(sum(alpha_) - 1.0) > kStateTol) throw std::invalid_argument("GpsWeights: sum(alpha) != 1");
    if (std::abs(sum(beta_) - 1.0) > kStateTol) throw std::invalid_argument("GpsWeights: sum(beta) != 1");
  }

  Vec alpha_;
  Vec beta_;
};

/// Service fractions when the set of empty classes is `empty`. The idle
/// server (every class empty) gets the zero vector.
inline Vec effective_rates(const GpsWeights& w, ClassSet empty) {
  const std::size_t J = w.size();
  Vec rates(J, 0.0);
  if (empty.is_full(J)) return rates;
  double freed = 0.0;
  double busy_beta = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    if (empty.contains(j))
      freed += w.alpha(j);
    else
      busy_beta += w.beta(j);
  }
  for (std::size_t i = 0; i < J; ++i) {
    if (!empty.contains(i)) rates[i] = w.alpha(i) + w.beta(i) * freed / busy_beta;
  }
  return rates;
}

/// d_i for i < J; i == J gives the origin direction (1,...,1)/sqrt(J).
inline Vec constraint_direction(const GpsWeights& w, std::size_t i) {
  const std::size_t J = w.size();
  if (i > J) throw std::out_of_range("constraint_direction: index " + std::to_string(i) + " out of range");
  if (i == J) return Vec(J, 1.0 / std::sqrt(static_cast<double>(J)));
  Vec d(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) d[j] = (j == i) ? 1.0 : -w.beta(j) / (1.0 - w.beta(i));
  return d;
}

/// Coefficients of a vector over the constraint directions. theta has J+1
/// entries; theta[J] multiplies the origin direction.
struct ConeDecomposition {
  Vec theta;
  ClassSet active;  // indices j < J with theta_j > 0
  double sigma = 0.0;
};

enum class OriginDirection { forbidden, allowed };

/// Unique nonnegative decomposition v = sum_j theta_j d_j (+ theta_{J+1} d_{J+1})
/// with at least one theta_j (j < J) equal to zero.
///
/// Without the origin direction v must lie on the hyperplane sum(v) = 0;
/// with it, sum(v) >= 0 is admissible and the normal component is peeled
/// off first. Throws InfeasibleError otherwise.
inline ConeDecomposition hyperplane_decompose(const GpsWeights& w, std::span<const double> v,
                                              OriginDirection origin = OriginDirection::forbidden,
                                              double tol = kAlgebraTol) {
  const std::size_t J = w.size();
  require_dim(v.size(), J, "hyperplane_decompose");
  const double scale = std::max(1.0, max_abs(v));
  const double total = sum(v);

  ConeDecomposition out;
  out.theta.assign(J + 1, 0.0);
  Vec h(v.begin(), v.end());
  if (origin == OriginDirection::allowed) {
    if (total < -tol * scale)
      throw InfeasibleError("hyperplane_decompose: sum(v) = " + std::to_string(total) + " < 0");
    if (total > tol * scale) {
      out.theta[J] = total / std::sqrt(static_cast<double>(J));
      for (double& x : h) x -= total / static_cast<double>(J);
    }
  } else if (std::abs(total) > tol * scale) {
    throw InfeasibleError("hyperplane_decompose: sum(v) = " + std::to_string(total) + " is not zero");
  }

  // With theta_j = (1 - beta_j)(h_j + beta_j sigma) the decomposition is
  // exact whenever sum(h) = 0; sigma is fixed by forcing the smallest
  // coefficient to zero.
  std::size_t argmin = 0;
  double min_ratio = h[0] / w.beta(0);
  for (std::size_t j = 1; j < J; ++j) {
    const double r = h[j] / w.beta(j);
    if (r < min_ratio) {
      min_ratio = r;
      argmin = j;
    }
  }
  out.sigma = std::max(0.0, -min_ratio);
  for (std::size_t j = 0; j < J; ++j) {
    if (j == argmin) continue;
    const double th = (1.0 - w.beta(j)) * (h[j] + w.beta(j) * out.sigma);
    out.theta[j] = th > tol * scale ? th : 0.0;
    if (out.theta[j] > 0.0) out.active.insert(j);
  }
  return out;
}

/// Reconstructs sum_j theta_j d_j (including the origin direction).
inline Vec reconstruct(const GpsWeights& w, std::span<const double> theta) {
  const std::size_t J = w.size();
  require_dim(theta.size(), J + 1, "reconstruct");
  Vec v(J, 0.0);
  for (std::size_t k = 0; k <= J; ++k) {
    if (theta[k] == 0.0) continue;
    const Vec d = constraint_direction(w, k);
    for (std::size_t j = 0; j < J; ++j) v[j] += theta[k] * d[j];
  }
  return v;
}

/// Water-filling projection with reusable scratch space.
///
/// Classes are sorted by x_j / beta_j; the clamp set grows from the smallest
/// ratio while the next ratio is strictly below the current excess rate
/// r_S = -sum_S x / (1 - sum_S beta). Ties stay outside the clamp set.
class Projector {
 public:
  explicit Projector(const GpsWeights& w) : beta_(w.beta()), order_(w.size()), ratio_(w.size()) {}

  /// Writes pi(x) into out (may alias x). Returns the excess rate r_S
  /// (0 when x is already nonnegative or projects to the origin).
  double operator()(std::span<const double> x, std::span<double> out) {
    const std::size_t J = beta_.size();
    bool nonneg = true;
    double total = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      nonneg = nonneg && x[j] >= 0.0;
      total += x[j];
    }
    if (nonneg) {
      if (out.data() != x.data()) std::copy(x.begin(), x.end(), out.begin());
      return 0.0;
    }
    if (total <= 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return 0.0;
    }
    for (std::size_t j = 0; j < J; ++j) {
      order_[j] = j;
      ratio_[j] = x[j] / beta_[j];
    }
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return ratio_[a] < ratio_[b] || (ratio_[a] == ratio_[b] && a < b);
    });
    double clamped_x = 0.0;
    double clamped_beta = 0.0;
    double rate = 0.0;
    std::size_t k = 0;
    while (k + 1 < J && ratio_[order_[k]] < rate) {
      clamped_x += x[order_[k]];
      clamped_beta += beta_[order_[k]];
      rate = -clamped_x / (1.0 - clamped_beta);
      ++k;
    }
    // Classes order_[0..k) form the clamp set.
    for (std::size_t m = 0; m < J; ++m) {
      const std::size_t j = order_[m];
      out[j] = m < k ? 0.0 : std::max(0.0, x[j] - beta_[j] * rate);
    }
    return rate;
  }

 private:
  Vec beta_;
  std::vector<std::size_t> order_;
  Vec ratio_;
};

/// The GPS projection pi onto the nonnegative orthant.
inline Vec project(const GpsWeights& w, std::span<const double> x) {
  require_dim(x.size(), w.size(), "project");
  Vec out(x.size());
  Projector p(w);
  p(x, out);
  return out;
}

/// Definitional projection by enumerating every candidate clamp set.
/// Only for small J; used to cross-check `project`.
inline Vec project_bruteforce(const GpsWeights& w, std::span<const double> x) {
  const std::size_t J = w.size();
  require_dim(x.size(), J, "project_bruteforce");
  if (J > 12) throw std::invalid_argument("project_bruteforce: J > 12");
  if (sum(x) <= 0.0) return Vec(J, 0.0);

  std::optional<Vec> found;
  const std::uint64_t full = ClassSet::all(J).bits();
  for (std::uint64_t bits = 0; bits < full; ++bits) {
    const ClassSet S(bits);
    double sx = 0.0, sb = 0.0;
    for (auto j : S.members()) {
      sx += x[j];
      sb += w.beta(j);
    }
    const double r = S.empty() ? 0.0 : -sx / (1.0 - sb);
    if (!S.empty() && !(r > 0.0)) continue;
    bool ok = true;
    Vec kappa(J, 0.0);
    for (std::size_t j = 0; j < J && ok; ++j) {
      const bool clamp = x[j] / w.beta(j) < r;
      if (clamp != S.contains(j)) ok = false;
      if (S.contains(j)) {
        const double theta = -(1.0 - w.beta(j)) * x[j] + w.beta(j) * (1.0 - w.beta(j)) * r;
        if (!(theta > 0.0)) ok = false;
      } else {
        kappa[j] = x[j] - w.beta(j) * r;
        if (kappa[j] < 0.0) ok = false;
      }
    }
    if (!ok) continue;
    if (found && sup_distance(*found, kappa) > 1e-9 * std::max(1.0, max_abs(x)))
      throw NumericError("project_bruteforce: two admissible clamp sets disagree");
    if (!found) found = std::move(kappa);
  }
  if (!found) throw NumericError("project_bruteforce: no admissible clamp set");
  return *found;
}

}  // namespace gps
