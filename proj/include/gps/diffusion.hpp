#pragma once

// Heavy-traffic limit: correlated Brownian netput, reduction to the
// critical classes and reflection on a time grid.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "gps/fluid.hpp"
#include "gps/geometry.hpp"
#include "gps/random.hpp"
#include "gps/reduction.hpp"
#include "gps/skorokhod.hpp"
#include "gps/types.hpp"

namespace gps {

using Matrix = std::vector<Vec>;

struct DiffusionConfig {
  Matrix M_H;  // covariance rate of B
  Vec c_hat;   // drift perturbation
  Vec u_hat;   // initial condition, must lie on the invariant manifold
  double step = 1.0 / 4096.0;
  double horizon = 1.0;
  std::uint64_t seed = 0;

  std::size_t steps() const {
    const double k = horizon / step;
    const auto r = static_cast<std::size_t>(std::llround(k));
    if (!(step > 0.0) || std::abs(k - static_cast<double>(r)) > 1e-9 * k)
      throw std::invalid_argument("DiffusionConfig: horizon must be a multiple of the step");
    return r;
  }
};

/// Symmetric square root of a PSD matrix, row-major. Eigenvalues down to
/// -1e-12 * scale are clamped to zero; anything more negative is an error.
inline Matrix factor_covariance(const Matrix& M) {
  const std::size_t J = M.size();
  Eigen::MatrixXd A(J, J);
  for (std::size_t i = 0; i < J; ++i) {
    require_dim(M[i].size(), J, "covariance row");
    for (std::size_t j = 0; j < J; ++j) {
      if (!std::isfinite(M[i][j])) throw NumericError("covariance has non-finite entries");
      A(i, j) = M[i][j];
    }
  }
  if (!A.isApprox(A.transpose(), 1e-12) && A.norm() > 0.0) throw NumericError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  if (eig.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
  Eigen::VectorXd ev = eig.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k) < -1e-12 * scale) throw NumericError("covariance is not positive semidefinite");
    ev(k) = std::sqrt(std::max(0.0, ev(k)));
  }
  const Eigen::MatrixXd R = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  Matrix out(J, Vec(J));
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < J; ++j) out[i][j] = R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

/// Brownian motion with covariance rate M_H sampled on the step grid,
/// starting at zero.
class BrownianSampler {
 public:
  explicit BrownianSampler(const DiffusionConfig& cfg)
      : root_(factor_covariance(cfg.M_H)), steps_(cfg.steps()), dt_(cfg.step), seed_(cfg.seed), z_(root_.size()) {}

  std::size_t dim() const { return root_.size(); }

  void sample(std::uint64_t replication, GridPath& out) {
    const std::size_t J = dim();
    if (out.dim != J || out.points() != steps_ + 1) out = GridPath(dt_, J, steps_);
    Rng rng = make_stream(seed_, replication, kBrownianStream);
    std::normal_distribution<double> normal;
    const double sd = std::sqrt(dt_);
    std::fill(out.row(0).begin(), out.row(0).end(), 0.0);
    for (std::size_t k = 1; k <= steps_; ++k) {
      for (double& z : z_) z = normal(rng) * sd;
      auto prev = out.row(k - 1);
      auto cur = out.row(k);
      for (std::size_t i = 0; i < J; ++i) {
        double inc = 0.0;
        for (std::size_t j = 0; j < J; ++j) inc += root_[i][j] * z_[j];
        cur[i] = prev[i] + inc;
      }
    }
  }

 private:
  Matrix root_;
  std::size_t steps_;
  double dt_;
  std::uint64_t seed_;
  Vec z_;
};

inline GridPath brownian_path(const DiffusionConfig& cfg, std::uint64_t replication = 0) {
  BrownianSampler sampler(cfg);
  GridPath out;
  sampler.sample(replication, out);
  return out;
}

struct LimitPaths {
  GridPath U;  // reflected limit, zero on S
  GridPath T;  // u_hat + B - U + c_hat t
  GridPath B;
};

/// Reusable limit-process generator for one (weights, gamma, config).
class LimitSampler {
 public:
  LimitSampler(const GpsWeights& w, std::span<const double> gamma, const DiffusionConfig& cfg)
      : cfg_(cfg), report_(checked_report(w, gamma)), sys_(reduced_weights(w, report_.S)), brownian_(cfg) {
    const std::size_t J = w.size();
    require_dim(brownian_.dim(), J, "DiffusionConfig M_H");
    if (cfg_.c_hat.empty()) cfg_.c_hat.assign(J, 0.0);
    if (cfg_.u_hat.empty()) cfg_.u_hat.assign(J, 0.0);
    require_dim(cfg_.c_hat.size(), J, "DiffusionConfig c_hat");
    require_dim(cfg_.u_hat.size(), J, "DiffusionConfig u_hat");
    for (std::size_t j = 0; j < J; ++j) {
      if (cfg_.u_hat[j] < 0.0) throw std::invalid_argument("u_hat must be nonnegative");
      if (report_.S.contains(j) && cfg_.u_hat[j] != 0.0)
        throw std::invalid_argument("u_hat must vanish on the subcritical classes");
    }
  }

  ClassSet S() const { return report_.S; }
  const SubcriticalReport& report() const { return report_; }
  const ReducedSystem& system() const { return sys_; }
  const DiffusionConfig& config() const { return cfg_; }

  void sample(std::uint64_t replication, LimitPaths& out) {
    const std::size_t J = sys_.parent.size();
    brownian_.sample(replication, out.B);
    const std::size_t n = out.B.points();
    GridPath X(cfg_.step, J, n - 1);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = out.B.time(k);
      for (std::size_t j = 0; j < J; ++j) X.row(k)[j] = cfg_.u_hat[j] + out.B.row(k)[j] + cfg_.c_hat[j] * t;
    }
    const GridPath UK = sm_grid(sys_.reduced, lift(sys_, X));
    out.U = GridPath(cfg_.step, J, n - 1);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t m = 0; m < sys_.size(); ++m) out.U.row(k)[sys_.K_index[m]] = UK.row(k)[m];
    out.T = GridPath(cfg_.step, J, n - 1);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < J; ++j) out.T.row(k)[j] = X.row(k)[j] - out.U.row(k)[j];
  }

 private:
  static SubcriticalReport checked_report(const GpsWeights& w, std::span<const double> gamma) {
    require_dim(gamma.size(), w.size(), "limit_process gamma");
    if (std::abs(sum(gamma) - 1.0) > kStateTol)
      throw std::invalid_argument("limit_process: heavy traffic requires sum(gamma) = 1");
    return subcritical_analysis(w, gamma);
  }

  DiffusionConfig cfg_;
  SubcriticalReport report_;
  ReducedSystem sys_;
  BrownianSampler brownian_;
};

inline LimitPaths limit_process(const GpsWeights& w, std::span<const double> gamma, const DiffusionConfig& cfg,
                                std::uint64_t replication = 0) {
  LimitSampler sampler(w, gamma, cfg);
  LimitPaths out;
  sampler.sample(replication, out);
  return out;
}

}  // namespace gps
