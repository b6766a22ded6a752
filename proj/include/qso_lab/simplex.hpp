#pragma once

// Points of the standard simplex S^{m-1} = {x in R^m : x_i >= 0, sum x_i = 1}
// and the order-theoretic tools that act on them (rearrangement,
// majorization).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qso_lab/error.hpp"

namespace qso {

/// Absolute tolerance on |sum x_i - 1| for a valid point.
inline constexpr double kSumTolerance = 1e-12;
/// Coordinates in [kClampFloor, 0) are float drift and get clamped to 0.
inline constexpr double kClampFloor = -1e-9;
/// Slack allowed on each prefix-sum comparison in majorizes().
inline constexpr double kPrefixTolerance = 1e-12;

enum class Normalization {
  strict,       // reject anything not already on the simplex
  renormalize,  // clamp tiny negatives, then rescale to unit sum
};

struct SimplexTolerances {
  double sum = kSumTolerance;
  double clamp_floor = kClampFloor;
};

/// A probability vector. Immutable once built; every instance satisfies
/// coords >= 0 and |sum - 1| <= 1e-12.
class SimplexPoint {
 public:
  SimplexPoint() = default;

  std::size_t dim() const noexcept { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const noexcept { return coords_; }
  const std::vector<double>& vec() const noexcept { return coords_; }
  auto begin() const noexcept { return coords_.begin(); }
  auto end() const noexcept { return coords_.end(); }

  friend bool operator==(const SimplexPoint&, const SimplexPoint&) = default;

  static SimplexPoint make(std::vector<double> raw, Normalization policy,
                           SimplexTolerances tol = {});

 private:
  explicit SimplexPoint(std::vector<double> coords) : coords_(std::move(coords)) {}

  std::vector<double> coords_;
};

inline SimplexPoint SimplexPoint::make(std::vector<double> raw, Normalization policy,
                                       SimplexTolerances tol) {
  detail::require(!raw.empty(), ErrorKind::invalid_argument,
                  "simplex point: dimension must be at least 1");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::invalid_argument,
                  "simplex point: coordinate " + std::to_string(i + 1) + " is not finite");
    }
    const double floor = policy == Normalization::strict ? 0.0 : tol.clamp_floor;
    if (v < floor) {
      throw Error(ErrorKind::invalid_argument,
                  "simplex point: coordinate " + std::to_string(i + 1) + " = " +
                      std::to_string(v) + " is negative");
    }
  }
  if (policy == Normalization::strict) {
    const double s = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (std::abs(s - 1.0) > tol.sum) {
      throw Error(ErrorKind::invalid_argument,
                  "simplex point: coordinates sum to " + std::to_string(s) + ", not 1");
    }
    for (double& v : raw) v = v + 0.0;  // normalizes -0.0
    return SimplexPoint(std::move(raw));
  }
  for (double& v : raw) v = std::max(v, 0.0);
  const double s = std::accumulate(raw.begin(), raw.end(), 0.0);
  detail::require(s > 0.0, ErrorKind::invalid_argument,
                  "simplex point: coordinates sum to zero after clamping");
  if (s != 1.0) {
    for (double& v : raw) v /= s;
  }
  return SimplexPoint(std::move(raw));
}

inline SimplexPoint make_point(std::vector<double> raw,
                               Normalization policy = Normalization::renormalize,
                               SimplexTolerances tol = {}) {
  return SimplexPoint::make(std::move(raw), policy, tol);
}

/// Sup-norm distance.
inline double distance(std::span<const double> a, std::span<const double> b) {
  detail::require_same_dim(a.size(), b.size(), "distance");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline double distance(const SimplexPoint& a, const SimplexPoint& b) {
  return distance(a.coords(), b.coords());
}

/// Coordinates sorted non-increasingly; ties keep their original order.
inline SimplexPoint decreasing_rearrangement(const SimplexPoint& x) {
  std::vector<double> v = x.vec();
  std::stable_sort(v.begin(), v.end(), std::greater<>());
  return make_point(std::move(v), Normalization::strict);
}

/// True iff y majorizes x (x ≺ y): every prefix sum of x↓ is at most the
/// matching prefix sum of y↓.
inline bool majorizes(const SimplexPoint& y, const SimplexPoint& x,
                      double tol = kPrefixTolerance) {
  detail::require_same_dim(y.dim(), x.dim(), "majorizes");
  std::vector<double> ys = y.vec();
  std::vector<double> xs = x.vec();
  std::sort(ys.begin(), ys.end(), std::greater<>());
  std::sort(xs.begin(), xs.end(), std::greater<>());
  double sy = 0.0;
  double sx = 0.0;
  // The full sums are 1 on both sides, so the last prefix is skipped.
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    sy += ys[k];
    sx += xs[k];
    if (sx > sy + tol) return false;
  }
  return true;
}

inline SimplexPoint vertex(std::size_t m, std::size_t i) {
  detail::require(i < m, ErrorKind::invalid_argument, "vertex: index out of range");
  std::vector<double> v(m, 0.0);
  v[i] = 1.0;
  return make_point(std::move(v), Normalization::strict);
}

inline std::vector<SimplexPoint> vertices(std::size_t m) {
  std::vector<SimplexPoint> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(vertex(m, i));
  return out;
}

inline SimplexPoint barycenter(std::size_t m) {
  detail::require(m >= 1, ErrorKind::invalid_argument, "barycenter: m must be positive");
  return make_point(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

/// Barycenter of the face spanned by the vertices whose bits are set in mask.
inline SimplexPoint face_barycenter(std::size_t m, std::uint64_t mask) {
  std::vector<double> v(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (mask >> i & 1U) v[i] = 1.0;
  }
  return make_point(std::move(v));
}

inline bool is_interior(const SimplexPoint& x, double tol) {
  return *std::min_element(x.begin(), x.end()) > tol;
}

inline double min_coordinate(const SimplexPoint& x) {
  return *std::min_element(x.begin(), x.end());
}

/// Uniform draw from S^{m-1} (flat Dirichlet).
template <class Rng>
SimplexPoint sample_uniform(std::size_t m, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> v(m);
  for (double& t : v) t = expo(rng);
  return make_point(std::move(v));
}

/// Draw from Dirichlet(alpha, ..., alpha).
template <class Rng>
std::vector<double> sample_dirichlet(std::size_t m, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> v(m);
  double s = 0.0;
  do {
    s = 0.0;
    for (double& t : v) {
      t = gamma(rng);
      s += t;
    }
  } while (s <= 0.0);
  for (double& t : v) t /= s;
  return v;
}

}  // namespace qso
