#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gps {

using Vec = std::vector<double>;

// Zero-detection tolerance for workload/state comparisons.
inline constexpr double kStateTol = 1e-9;
// Tolerance for algebraic identities (sums, cone residuals).
inline constexpr double kAlgebraTol = 1e-12;

inline constexpr std::size_t kMaxClasses = 64;

/// Raised when a vector has no nonnegative decomposition over the admissible
/// constraint directions.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on numerical breakdown (non-PSD covariance, inconsistent routes).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A subset of the class indices {0, ..., J-1}, stored as a bit mask.
class ClassSet {
 public:
  constexpr ClassSet() = default;
  constexpr explicit ClassSet(std::uint64_t bits) : bits_(bits) {}

  ClassSet(std::initializer_list<std::size_t> members) {
    for (auto m : members) insert(m);
  }

  static constexpr ClassSet all(std::size_t J) {
    return ClassSet(J >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << J) - 1));
  }

  constexpr bool contains(std::size_t i) const { return (bits_ >> i) & 1U; }
  constexpr void insert(std::size_t i) { bits_ |= std::uint64_t{1} << i; }
  constexpr void erase(std::size_t i) { bits_ &= ~(std::uint64_t{1} << i); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr std::uint64_t bits() const { return bits_; }

  constexpr bool is_full(std::size_t J) const { return bits_ == all(J).bits_; }
  constexpr bool subset_of(ClassSet other) const { return (bits_ & ~other.bits_) == 0; }
  constexpr ClassSet complement(std::size_t J) const { return ClassSet(~bits_ & all(J).bits_); }

  std::vector<std::size_t> members() const {
    std::vector<std::size_t> out;
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) out.push_back(static_cast<std::size_t>(std::countr_zero(b)));
    return out;
  }

  /// 1-based labels, the convention used in reports and configs.
  std::string to_string() const {
    std::string s = "{";
    bool first = true;
    for (auto m : members()) {
      if (!first) s += ",";
      s += std::to_string(m + 1);
      first = false;
    }
    return s + "}";
  }

  friend constexpr bool operator==(ClassSet, ClassSet) = default;
  friend constexpr auto operator<=>(ClassSet a, ClassSet b) { return a.bits_ <=> b.bits_; }

 private:
  std::uint64_t bits_ = 0;
};

inline double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension " + std::to_string(got) + ", expected " +
                                std::to_string(want));
  }
}

}  // namespace gps
