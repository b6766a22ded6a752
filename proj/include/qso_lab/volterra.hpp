#pragma once

// Volterra operators in canonical form
//
//     x'_k = x_k (1 + sum_i a_ki x_i),   a_ki = 2 P_{ik,k} - 1,   A = -A^T,
//
// plus permuted Volterra maps, transversality, and the Lyapunov functions
// known for this class.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qso_lab/error.hpp"
#include "qso_lab/evaluator.hpp"
#include "qso_lab/simplex.hpp"
#include "qso_lab/tensor.hpp"

namespace qso {

namespace detail {

/// Rounds to the 2^-52 grid. On that grid 1 + a is exact for |a| <= 1, which
/// makes the tensor <-> matrix conversions exact inverses of each other.
inline double snap_to_grid(double a) {
  constexpr double scale = 4503599627370496.0;  // 2^52
  return std::nearbyint(a * scale) / scale;
}

}  // namespace detail

/// Skew-symmetric matrix with entries in [-1, 1].
class SkewSymmetricMatrix {
 public:
  SkewSymmetricMatrix() = default;

  /// Zero matrix of order m.
  explicit SkewSymmetricMatrix(std::size_t m) : m_(m), a_(m * m, 0.0) {}

  /// Builds from strictly-upper-triangle entries (i < k, 0-based); the lower
  /// triangle is completed by skew symmetry.
  static SkewSymmetricMatrix from_upper(
      std::size_t m, const std::vector<std::tuple<std::size_t, std::size_t, double>>& upper) {
    SkewSymmetricMatrix out(m);
    for (const auto& [i, k, v] : upper) {
      detail::require(i < m && k < m && i < k, ErrorKind::invalid_argument,
                      "skew matrix: upper entry (" + std::to_string(i) + ", " +
                          std::to_string(k) + ") is not strictly upper triangular");
      out.set(i, k, v);
    }
    return out;
  }

  /// Builds from a full row-major matrix, which must already be skew.
  static SkewSymmetricMatrix from_dense(std::size_t m, const std::vector<double>& full,
                                        double tol = kTensorTolerance) {
    detail::require(full.size() == m * m, ErrorKind::dimension_mismatch,
                    "skew matrix: expected m*m entries");
    SkewSymmetricMatrix out(m);
    for (std::size_t i = 0; i < m; ++i) {
      detail::require(std::abs(full[i * m + i]) <= tol, ErrorKind::validation,
                      "skew matrix: nonzero diagonal at " + std::to_string(i + 1));
      for (std::size_t k = i + 1; k < m; ++k) {
        const double up = full[i * m + k];
        const double lo = full[k * m + i];
        detail::require(std::abs(up + lo) <= tol, ErrorKind::validation,
                        "skew matrix: a[" + std::to_string(i + 1) + "][" + std::to_string(k + 1) +
                            "] != -a[" + std::to_string(k + 1) + "][" + std::to_string(i + 1) +
                            "]");
        out.set(i, k, 0.5 * (up - lo));
      }
    }
    return out;
  }

  std::size_t dim() const noexcept { return m_; }
  double operator()(std::size_t k, std::size_t i) const { return a_[k * m_ + i]; }

  /// Sets a[i][k] = v and a[k][i] = -v.
  void set(std::size_t i, std::size_t k, double v) {
    detail::require(i != k, ErrorKind::invalid_argument, "skew matrix: diagonal is fixed at 0");
    detail::require(std::isfinite(v) && std::abs(v) <= 1.0, ErrorKind::invalid_argument,
                    "skew matrix: entry " + std::to_string(v) + " outside [-1, 1]");
    v = detail::snap_to_grid(v);
    a_[i * m_ + k] = v;
    a_[k * m_ + i] = -v;
  }

  Eigen::MatrixXd to_eigen() const {
    const auto m = static_cast<Eigen::Index>(m_);
    Eigen::MatrixXd out(m, m);
    for (Eigen::Index k = 0; k < m; ++k)
      for (Eigen::Index i = 0; i < m; ++i) out(k, i) = (*this)(k, i);
    return out;
  }

  friend bool operator==(const SkewSymmetricMatrix&, const SkewSymmetricMatrix&) = default;

 private:
  std::size_t m_ = 0;
  std::vector<double> a_;
};

/// A bijection of {0, ..., m-1}.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> images) : images_(std::move(images)) {
    std::vector<bool> seen(images_.size(), false);
    for (std::size_t v : images_) {
      detail::require(v < images_.size() && !seen[v], ErrorKind::invalid_argument,
                      "permutation: images are not a bijection");
      seen[v] = true;
    }
  }

  static Permutation identity(std::size_t m) {
    std::vector<std::size_t> v(m);
    std::iota(v.begin(), v.end(), 0);
    return Permutation(std::move(v));
  }

  /// i -> i + 1 (mod m).
  static Permutation shift(std::size_t m) {
    std::vector<std::size_t> v(m);
    for (std::size_t i = 0; i < m; ++i) v[i] = (i + 1) % m;
    return Permutation(std::move(v));
  }

  std::size_t size() const noexcept { return images_.size(); }
  std::size_t operator()(std::size_t i) const { return images_[i]; }
  const std::vector<std::size_t>& images() const noexcept { return images_; }

  bool is_identity() const {
    for (std::size_t i = 0; i < images_.size(); ++i)
      if (images_[i] != i) return false;
    return true;
  }

  /// Disjoint cycles, each starting at its least element, ordered by that.
  std::vector<std::vector<std::size_t>> cycles() const {
    std::vector<std::vector<std::size_t>> out;
    std::vector<bool> seen(images_.size(), false);
    for (std::size_t s = 0; s < images_.size(); ++s) {
      if (seen[s]) continue;
      std::vector<std::size_t> c;
      for (std::size_t i = s; !seen[i]; i = images_[i]) {
        seen[i] = true;
        c.push_back(i);
      }
      out.push_back(std::move(c));
    }
    return out;
  }

  /// A single cycle through all indices.
  bool is_cyclic() const { return cycles().size() == 1; }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> images_;
};

/// a_ki = 2 P_{ik,k} - 1. Throws unless P is Volterra.
inline SkewSymmetricMatrix from_tensor(const HeredityTensor& p, double zero_tol = kZeroTolerance) {
  const auto ell = volterra_level(p, zero_tol);
  detail::require(ell && *ell == p.dim(), ErrorKind::validation,
                  "from_tensor: tensor is not Volterra");
  const std::size_t m = p.dim();
  SkewSymmetricMatrix a(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = i + 1; k < m; ++k) {
      // a_ik = 2 P_{ki,i} - 1
      a.set(i, k, std::clamp(2.0 * p(k, i, i) - 1.0, -1.0, 1.0));
    }
  return a;
}

/// Inverse of from_tensor: P_{ik,k} = (1 + a_ki)/2, P_{ik,i} = (1 - a_ki)/2,
/// P_{ii,i} = 1, everything else 0.
inline HeredityTensor to_tensor(const SkewSymmetricMatrix& a) {
  const std::size_t m = a.dim();
  CubicArray p(m);
  for (std::size_t i = 0; i < m; ++i) {
    p(i, i, i) = 1.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == i) continue;
      p(i, k, k) = 0.5 * (1.0 + a(k, i));
      p(i, k, i) = 0.5 * (1.0 - a(k, i));
    }
  }
  return HeredityTensor::make(std::move(p));
}

inline std::vector<double> apply_canonical_raw(const SkewSymmetricMatrix& a,
                                               std::span<const double> x) {
  const std::size_t m = a.dim();
  detail::require_same_dim(m, x.size(), "apply_canonical");
  std::vector<double> out(m);
  for (std::size_t k = 0; k < m; ++k) {
    double s = 1.0;
    for (std::size_t i = 0; i < m; ++i) s += a(k, i) * x[i];
    out[k] = x[k] * s;
  }
  return out;
}

inline SimplexPoint apply_canonical(const SkewSymmetricMatrix& a, const SimplexPoint& x) {
  return make_point(apply_canonical_raw(a, x.coords()));
}

/// y_{τ(j)} = x_j (1 + sum_k a_jk x_k). With τ = id this is the canonical
/// Volterra map itself.
inline Evaluator permuted_operator(const SkewSymmetricMatrix& a, const Permutation& tau,
                                   std::string name = "permuted_volterra") {
  detail::require_same_dim(a.dim(), tau.size(), "permuted_operator");
  const std::size_t m = a.dim();
  auto mat = std::make_shared<const SkewSymmetricMatrix>(a);
  auto perm = std::make_shared<const Permutation>(tau);
  // log(1 + a_jk) per row; -inf where a_jk = -1.
  auto log_coef = std::make_shared<std::vector<double>>(m * m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k) {
      const double c = 1.0 + a(j, k);
      (*log_coef)[j * m + k] = c > 0.0 ? std::log(c) : kNegInf;
    }

  auto raw = [mat, perm](std::span<const double> x, std::span<double> out) {
    const auto y = apply_canonical_raw(*mat, x);
    for (std::size_t j = 0; j < y.size(); ++j) out[(*perm)(j)] = y[j];
  };
  // On the simplex 1 + sum_k a_jk x_k = sum_k (1 + a_jk) x_k, a sum of
  // nonnegative terms.
  auto log_step = [log_coef, perm, m](std::span<const double> u, std::span<double> out) {
    std::vector<double> buf(m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < m; ++k) buf[k] = (*log_coef)[j * m + k] + u[k];
      out[(*perm)(j)] = u[j] + detail::log_sum_exp(buf);
    }
  };
  return Evaluator(m, raw, log_step, std::move(name));
}

/// Heredity tensor of the permuted map: coordinate τ(k) inherits the
/// coefficients of coordinate k.
inline HeredityTensor permuted_tensor(const SkewSymmetricMatrix& a, const Permutation& tau) {
  detail::require_same_dim(a.dim(), tau.size(), "permuted_tensor");
  const HeredityTensor base = to_tensor(a);
  const std::size_t m = a.dim();
  CubicArray p(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) p(i, j, tau(k)) = base(i, j, k);
  return HeredityTensor::make(std::move(p));
}

inline Evaluator make_evaluator(const SkewSymmetricMatrix& a, std::string name = "volterra") {
  return permuted_operator(a, Permutation::identity(a.dim()), std::move(name));
}

/// Every even-order leading principal minor has |det| > tol.
inline bool is_transversal(const SkewSymmetricMatrix& a, double tol = 1e-10) {
  const Eigen::MatrixXd full = a.to_eigen();
  for (Eigen::Index order = 2; order <= full.rows(); order += 2) {
    const double det = full.topLeftCorner(order, order).fullPivLu().determinant();
    if (!(std::abs(det) > tol)) return false;
  }
  return true;
}

/// Candidate Lyapunov functions for Volterra dynamics.
struct LyapunovSpec {
  enum class Kind { product, partial_sum, ratio };
  Kind kind = Kind::product;
  std::vector<double> p;  // product: exponents, a probability vector
  std::size_t r = 0;      // partial_sum: sum of coordinates r, ..., m-1 (0-based)
  std::size_t i = 0;      // ratio: x_i / x_j
  std::size_t j = 0;

  static LyapunovSpec product(std::vector<double> weights) {
    const auto w = make_point(weights, Normalization::strict);
    LyapunovSpec s;
    s.kind = Kind::product;
    s.p = w.vec();
    return s;
  }
  /// phi(x) = sum_{i >= r} x_i with 1 <= r < m; r counts the leading indices
  /// left out.
  static LyapunovSpec partial_sum(std::size_t r) {
    detail::require(r >= 1, ErrorKind::invalid_argument, "partial_sum: r must be at least 1");
    LyapunovSpec s;
    s.kind = Kind::partial_sum;
    s.r = r;
    return s;
  }
  static LyapunovSpec ratio(std::size_t i, std::size_t j) {
    detail::require(i != j, ErrorKind::invalid_argument, "ratio: indices must differ");
    LyapunovSpec s;
    s.kind = Kind::ratio;
    s.i = i;
    s.j = j;
    return s;
  }
};

inline double lyapunov_value(const LyapunovSpec& spec, const SimplexPoint& x) {
  const std::size_t m = x.dim();
  switch (spec.kind) {
    case LyapunovSpec::Kind::product: {
      detail::require_same_dim(spec.p.size(), m, "lyapunov_value");
      detail::require(is_interior(x, 0.0), ErrorKind::invalid_argument,
                      "lyapunov_value: product form needs an interior point");
      double log_phi = 0.0;
      for (std::size_t t = 0; t < m; ++t)
        if (spec.p[t] > 0.0) log_phi += spec.p[t] * std::log(x[t]);
      return std::exp(log_phi);
    }
    case LyapunovSpec::Kind::partial_sum: {
      detail::require(spec.r < m, ErrorKind::invalid_argument,
                      "lyapunov_value: partial_sum r must be below m");
      double s = 0.0;
      for (std::size_t t = spec.r; t < m; ++t) s += x[t];
      return s;
    }
    case LyapunovSpec::Kind::ratio: {
      detail::require(spec.i < m && spec.j < m, ErrorKind::invalid_argument,
                      "lyapunov_value: ratio index out of range");
      detail::require(x[spec.i] > 0.0 && x[spec.j] > 0.0, ErrorKind::invalid_argument,
                      "lyapunov_value: ratio form needs positive coordinates");
      return x[spec.i] / x[spec.j];
    }
  }
  return 0.0;
}

/// a_ij < 0 for all i < r <= j (0-based), the sign pattern under which the
/// tail sum sum_{i >= r} x_i is a Lyapunov function.
inline bool partial_sum_applicable(const SkewSymmetricMatrix& a, std::size_t r) {
  const std::size_t m = a.dim();
  detail::require(r >= 1 && r < m, ErrorKind::invalid_argument,
                  "partial_sum_applicable: r must satisfy 1 <= r < m");
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = r; j < m; ++j)
      if (!(a(i, j) < 0.0)) return false;
  return true;
}

struct ZakharevichFamily {
  SkewSymmetricMatrix matrix;
  /// Same sign and all nonzero: Cesàro averages are predicted not to converge.
  bool ergodic_failure_predicted = false;
};

/// x' = x(1 + ay - bz), y' = y(1 - ax + cz), z' = z(1 + bx - cy).
inline ZakharevichFamily zakharevich_family(double a, double b, double c) {
  for (double v : {a, b, c}) {
    detail::require(std::isfinite(v) && std::abs(v) <= 1.0, ErrorKind::invalid_argument,
                    "zakharevich_family: parameters must lie in [-1, 1]");
  }
  ZakharevichFamily out{SkewSymmetricMatrix::from_upper(3, {{0, 1, a}, {0, 2, -b}, {1, 2, c}}),
                        false};
  out.ergodic_failure_predicted =
      a != 0.0 && b != 0.0 && c != 0.0 && ((a > 0) == (b > 0)) && ((b > 0) == (c > 0));
  return out;
}

}  // namespace qso
