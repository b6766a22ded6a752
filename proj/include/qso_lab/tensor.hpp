#pragma once

// Heredity tensors P_{ij,k} and the quadratic stochastic operator they define,
//
//     x'_k = sum_{i,j} P_{ij,k} x_i x_j,
//
// together with structural classification and the majorization-based
// bistochasticity tests.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qso_lab/error.hpp"
#include "qso_lab/simplex.hpp"

namespace qso {

inline constexpr double kTensorTolerance = 1e-12;
inline constexpr double kZeroTolerance = 1e-12;
inline constexpr double kBistochasticTolerance = 1e-10;
/// Subset enumeration for condition (c) is 2^m; refuse beyond this.
inline constexpr std::size_t kMaxSubsetDim = 12;

/// Dense m x m x m array with no invariants attached; the staging area for
/// building and validating heredity tensors.
class CubicArray {
 public:
  CubicArray() = default;
  explicit CubicArray(std::size_t m, double fill = 0.0) : m_(m), data_(m * m * m, fill) {}

  std::size_t dim() const noexcept { return m_; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * m_ + j) * m_ + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * m_ + j) * m_ + k];
  }
  /// Sets P_{ij,k} and P_{ji,k} together.
  void set_sym(std::size_t i, std::size_t j, std::size_t k, double v) {
    (*this)(i, j, k) = v;
    (*this)(j, i, k) = v;
  }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const CubicArray&, const CubicArray&) = default;

 private:
  std::size_t m_ = 0;
  std::vector<double> data_;
};

struct Violation {
  enum class Kind { negative, asymmetric, not_stochastic };
  Kind kind;
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;  // unused for not_stochastic
  double magnitude = 0.0;

  /// Human-readable, with 1-based indices.
  std::string describe() const {
    std::ostringstream os;
    os.precision(6);
    switch (kind) {
      case Kind::negative:
        os << "P[" << i + 1 << "][" << j + 1 << "][" << k + 1 << "] is negative by "
           << magnitude;
        break;
      case Kind::asymmetric:
        os << "P[" << i + 1 << "][" << j + 1 << "][" << k + 1 << "] differs from P[" << j + 1
           << "][" << i + 1 << "][" << k + 1 << "] by " << magnitude;
        break;
      case Kind::not_stochastic:
        os << "sum_k P[" << i + 1 << "][" << j + 1 << "][k] deviates from 1 by " << magnitude;
        break;
    }
    return os.str();
  }
};

inline const char* to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::negative: return "negative";
    case Violation::Kind::asymmetric: return "asymmetric";
    case Violation::Kind::not_stochastic: return "not_stochastic";
  }
  return "unknown";
}

/// Every breach of nonnegativity, i<->j symmetry, or k-stochasticity.
/// Never throws.
inline std::vector<Violation> validate(const CubicArray& p, double tol = kTensorTolerance) {
  std::vector<Violation> out;
  const std::size_t m = p.dim();
  if (m == 0) {
    out.push_back({Violation::Kind::not_stochastic, 0, 0, 0, 1.0});
    return out;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double v = p(i, j, k);
        if (!(v >= 0.0)) out.push_back({Violation::Kind::negative, i, j, k, std::abs(v)});
        if (i < j) {
          const double d = std::abs(v - p(j, i, k));
          if (!(d <= tol)) out.push_back({Violation::Kind::asymmetric, i, j, k, d});
        }
        s += v;
      }
      if (!(std::abs(s - 1.0) <= tol)) {
        out.push_back({Violation::Kind::not_stochastic, i, j, 0, std::abs(s - 1.0)});
      }
    }
  }
  return out;
}

enum class TensorPolicy {
  strict,  // validate as given
  repair,  // symmetrize, clamp drift-sized negatives, rescale drift-sized row sums
};

/// Validated heredity tensor: P >= 0, P_{ij,k} = P_{ji,k} exactly, and
/// sum_k P_{ij,k} = 1 within 1e-12.
class HeredityTensor {
 public:
  HeredityTensor() = default;

  static HeredityTensor make(CubicArray raw, TensorPolicy policy = TensorPolicy::strict);

  std::size_t dim() const noexcept { return p_.dim(); }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return p_(i, j, k); }
  const CubicArray& entries() const noexcept { return p_; }

  friend bool operator==(const HeredityTensor&, const HeredityTensor&) = default;

 private:
  explicit HeredityTensor(CubicArray p) : p_(std::move(p)) {}
  CubicArray p_;
};

inline HeredityTensor HeredityTensor::make(CubicArray raw, TensorPolicy policy) {
  const std::size_t m = raw.dim();
  detail::require(m >= 1, ErrorKind::invalid_argument, "heredity tensor: m must be positive");
  if (policy == TensorPolicy::repair) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          double& v = raw(i, j, k);
          if (v < 0.0 && v >= kClampFloor) v = 0.0;
          s += v;
        }
        if (s > 0.0 && std::abs(s - 1.0) <= 1e-9) {
          for (std::size_t k = 0; k < m; ++k) raw(i, j, k) /= s;
        }
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
          const double v = 0.5 * (raw(i, j, k) + raw(j, i, k));
          raw.set_sym(i, j, k, v);
        }
      }
    }
  }
  const auto violations = validate(raw);
  if (!violations.empty()) {
    std::string msg = "heredity tensor invalid: " + violations.front().describe();
    if (violations.size() > 1) {
      msg += " (and " + std::to_string(violations.size() - 1) + " more)";
    }
    throw Error(ErrorKind::validation, msg);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      for (std::size_t k = 0; k < m; ++k) {
        raw.set_sym(i, j, k, 0.5 * (raw(i, j, k) + raw(j, i, k)));
      }
    }
  }
  return HeredityTensor(std::move(raw));
}

/// Evaluates the quadratic form on an arbitrary vector (no simplex repair);
/// used for root finding off the simplex and for raw-sum checks.
inline std::vector<double> apply_raw(const HeredityTensor& p, std::span<const double> x) {
  const std::size_t m = p.dim();
  detail::require_same_dim(m, x.size(), "apply");
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (x[i] == 0.0) continue;
    for (std::size_t j = 0; j < m; ++j) {
      const double w = x[i] * x[j];
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < m; ++k) out[k] += p(i, j, k) * w;
    }
  }
  return out;
}

inline SimplexPoint apply(const HeredityTensor& p, const SimplexPoint& x) {
  return make_point(apply_raw(p, x.coords()), Normalization::renormalize);
}

inline HeredityTensor convex_combination(const HeredityTensor& p1, const HeredityTensor& p2,
                                         double lambda) {
  detail::require_same_dim(p1.dim(), p2.dim(), "convex_combination");
  detail::require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::invalid_argument,
                  "convex_combination: lambda must lie in [0, 1]");
  if (lambda == 1.0) return p1;
  if (lambda == 0.0) return p2;
  const std::size_t m = p1.dim();
  CubicArray out(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k)
        out(i, j, k) = lambda * p1(i, j, k) + (1.0 - lambda) * p2(i, j, k);
  return HeredityTensor::make(std::move(out), TensorPolicy::repair);
}

/// Tensor of the identity map: P_{ij,k} = (δ_ik + δ_jk) / 2.
inline HeredityTensor identity_tensor(std::size_t m) {
  CubicArray p(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      p(i, j, i) += 0.5;
      p(i, j, j) += 0.5;
    }
  return HeredityTensor::make(std::move(p));
}

inline HeredityTensor uniform_tensor(std::size_t m) {
  return HeredityTensor::make(CubicArray(m, 1.0 / static_cast<double>(m)));
}

// ---------------------------------------------------------------------------
// Structural classification

/// Coordinate k obeys the Volterra pattern: P_{ij,k} = 0 whenever k ∉ {i,j}.
inline bool coordinate_is_volterra(const HeredityTensor& p, std::size_t k,
                                   double zero_tol = kZeroTolerance) {
  const std::size_t m = p.dim();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j)
      if (i != k && j != k && p(i, j, k) > zero_tol) return false;
  return true;
}

/// The ℓ for which the first ℓ coordinates follow the Volterra pattern and the
/// rest all violate it; nullopt when no ℓ in 1..m fits.
inline std::optional<std::size_t> volterra_level(const HeredityTensor& p,
                                                 double zero_tol = kZeroTolerance) {
  const std::size_t m = p.dim();
  std::size_t ell = 0;
  while (ell < m && coordinate_is_volterra(p, ell, zero_tol)) ++ell;
  if (ell == 0) return std::nullopt;
  for (std::size_t k = ell; k < m; ++k)
    if (coordinate_is_volterra(p, k, zero_tol)) return std::nullopt;
  return ell;
}

inline bool is_strictly_non_volterra(const HeredityTensor& p, double zero_tol = kZeroTolerance) {
  const std::size_t m = p.dim();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (p(i, j, i) > zero_tol || p(i, j, j) > zero_tol) return false;
    }
  return true;
}

/// Checks the female/male/empty-body pattern with index 0 as the empty body
/// and `females` a subset of 1..m-1. Pairs within F∪{0} or within M∪{0}
/// must produce the empty body with certainty.
inline bool matches_f_qso_pattern(const HeredityTensor& p, const std::set<std::size_t>& females,
                                  double zero_tol = kZeroTolerance) {
  const std::size_t m = p.dim();
  for (std::size_t f : females)
    if (f == 0 || f >= m) return false;
  auto is_female = [&](std::size_t i) { return females.count(i) > 0; };
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      const bool mixed = (i != 0 && j != 0) && (is_female(i) != is_female(j));
      if (mixed) continue;
      if (std::abs(p(i, j, 0) - 1.0) > zero_tol) return false;
      for (std::size_t k = 1; k < m; ++k)
        if (p(i, j, k) > zero_tol) return false;
    }
  return true;
}

/// Witness that P_{ij,k} = (a_ik b_jk + a_jk b_ik) / 2. Column k of `a` and
/// `b` holds the vectors for coordinate k.
struct SeparableWitness {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
};

/// Each slice M_k = (P_{ij,k})_{ij} is a symmetrized outer product iff it has
/// at most one positive and at most one negative eigenvalue.
inline std::optional<SeparableWitness> separable_witness(const HeredityTensor& p,
                                                         double tol = 1e-10) {
  const auto m = static_cast<Eigen::Index>(p.dim());
  SeparableWitness w{Eigen::MatrixXd::Zero(m, m), Eigen::MatrixXd::Zero(m, m)};
  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::MatrixXd slice(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) slice(i, j) = p(i, j, k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(slice);
    const auto& ev = es.eigenvalues();
    int n_pos = 0;
    int n_neg = 0;
    for (Eigen::Index t = 0; t < m; ++t) {
      if (ev(t) > tol) ++n_pos;
      if (ev(t) < -tol) ++n_neg;
    }
    if (n_pos > 1 || n_neg > 1) return std::nullopt;
    Eigen::VectorXd pos = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd neg = Eigen::VectorXd::Zero(m);
    // eigenvalues come sorted ascending
    if (n_pos == 1) pos = std::sqrt(ev(m - 1)) * es.eigenvectors().col(m - 1);
    if (n_neg == 1) neg = std::sqrt(-ev(0)) * es.eigenvectors().col(0);
    // pos pos^T - neg neg^T = sym((pos + neg)(pos - neg)^T)
    w.a.col(k) = pos + neg;
    w.b.col(k) = pos - neg;
    const Eigen::MatrixXd rebuilt =
        0.5 * (w.a.col(k) * w.b.col(k).transpose() + w.b.col(k) * w.a.col(k).transpose());
    if ((rebuilt - slice).cwiseAbs().maxCoeff() > 1e-9) return std::nullopt;
  }
  return w;
}

/// The three coefficient conditions for quadratic bistochastic operators:
///   (a) sum_{i,j} P_{ij,k} = m for every k;
///   (b) sum_j P_{ij,k} >= 1/2 for every i, k;
///   (c) sum_{i,j in I} P_{ij,k} <= |I| for every subset I and every k.
/// Failing (a) or (b) rules bistochasticity out; (c) guarantees it.
struct BistochasticCheck {
  bool a_ok = true;
  bool b_ok = true;
  std::optional<bool> c_ok;  // nullopt when m exceeds the enumeration bound
  std::optional<std::size_t> a_witness_k;
  std::optional<std::pair<std::size_t, std::size_t>> b_witness_ik;
  std::optional<std::pair<std::uint64_t, std::size_t>> c_witness_subset_k;  // (bitmask, k)
};

inline BistochasticCheck bistochastic_conditions(const HeredityTensor& p, bool check_c = true,
                                                 double tol = kBistochasticTolerance) {
  const std::size_t m = p.dim();
  if (check_c && m > kMaxSubsetDim) {
    throw Error(ErrorKind::limit_exceeded,
                "bistochastic_conditions: condition (c) enumerates 2^m subsets; m = " +
                    std::to_string(m) + " exceeds " + std::to_string(kMaxSubsetDim));
  }
  BistochasticCheck out;
  for (std::size_t k = 0; k < m; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += p(i, j, k);
      total += row;
      if (out.b_ok && row < 0.5 - tol) {
        out.b_ok = false;
        out.b_witness_ik = {i, k};
      }
    }
    if (out.a_ok && std::abs(total - static_cast<double>(m)) > tol) {
      out.a_ok = false;
      out.a_witness_k = k;
    }
  }
  if (!check_c) return out;
  out.c_ok = true;
  const std::uint64_t n_subsets = std::uint64_t{1} << m;
  std::vector<std::size_t> members;
  for (std::uint64_t mask = 1; mask < n_subsets && *out.c_ok; ++mask) {
    members.clear();
    for (std::size_t i = 0; i < m; ++i)
      if (mask >> i & 1U) members.push_back(i);
    const auto t = static_cast<double>(members.size());
    for (std::size_t k = 0; k < m; ++k) {
      double s = 0.0;
      for (std::size_t i : members)
        for (std::size_t j : members) s += p(i, j, k);
      if (s > t + tol) {
        out.c_ok = false;
        out.c_witness_subset_k = {mask, k};
        break;
      }
    }
  }
  return out;
}

/// Necessary shape of extreme points of the bistochastic polytope: diagonal
/// entries in {0, 1}, off-diagonal entries in {0, 1/2, 1}. Not sufficient.
inline bool is_extreme_candidate(const HeredityTensor& p, double tol = kTensorTolerance) {
  const std::size_t m = p.dim();
  auto near = [tol](double v, double target) { return std::abs(v - target) <= tol; };
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const double v = p(i, j, k);
        const bool ok = i == j ? (near(v, 0.0) || near(v, 1.0))
                               : (near(v, 0.0) || near(v, 0.5) || near(v, 1.0));
        if (!ok) return false;
      }
  return true;
}

/// min_{i,j,k} P_{ij,k} - 1/(2m); positive certifies regularity.
inline double regularity_margin(const HeredityTensor& p) {
  const auto data = p.entries().data();
  return *std::min_element(data.begin(), data.end()) - 0.5 / static_cast<double>(p.dim());
}

/// Probe points: all vertices, the barycenter, then n_samples uniform draws.
inline std::vector<SimplexPoint> probe_points(std::size_t m, std::size_t n_samples,
                                              std::uint64_t seed) {
  std::vector<SimplexPoint> pts = vertices(m);
  pts.push_back(barycenter(m));
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < n_samples; ++s) pts.push_back(sample_uniform(m, rng));
  return pts;
}

struct ProbeResult {
  bool holds = true;
  std::optional<SimplexPoint> counterexample;
  std::size_t n_checked = 0;
};

/// Samples V(x) ≺ x.
inline ProbeResult majorization_probe(const HeredityTensor& p, std::size_t n_samples,
                                      std::uint64_t seed) {
  detail::require(n_samples >= 1, ErrorKind::invalid_argument,
                  "majorization_probe: n_samples must be positive");
  ProbeResult out;
  for (const auto& x : probe_points(p.dim(), n_samples, seed)) {
    ++out.n_checked;
    if (!majorizes(x, apply(p, x))) {
      out.holds = false;
      out.counterexample = x;
      return out;
    }
  }
  return out;
}

struct IdempotenceResult {
  bool holds = true;
  double max_deviation = 0.0;
  std::optional<SimplexPoint> worst_point;
};

/// Sampled test of V^r = V in sup-norm.
inline IdempotenceResult is_idempotent(const HeredityTensor& p, int r, std::size_t n_samples,
                                       std::uint64_t seed, double tol) {
  detail::require(r >= 2, ErrorKind::invalid_argument, "is_idempotent: r must be at least 2");
  IdempotenceResult out;
  for (const auto& x : probe_points(p.dim(), n_samples, seed)) {
    const SimplexPoint v1 = apply(p, x);
    SimplexPoint vr = v1;
    for (int t = 1; t < r; ++t) vr = apply(p, vr);
    const double d = distance(vr, v1);
    if (d > out.max_deviation) {
      out.max_deviation = d;
      out.worst_point = x;
    }
  }
  out.holds = out.max_deviation <= tol;
  return out;
}

struct ClassificationReport {
  bool is_volterra = false;
  std::optional<std::size_t> ell;
  bool is_strictly_non_volterra = false;
  std::optional<std::set<std::size_t>> f_qso_partition;
  bool bistochastic_necessary_ok = false;
  std::optional<bool> bistochastic_sufficient_ok;
  double regularity_margin = 0.0;
  std::optional<SeparableWitness> separable_witness;
  bool extreme_candidate = false;
};

inline ClassificationReport classify(const HeredityTensor& p,
                                     const std::optional<std::set<std::size_t>>& f_partition = {},
                                     double zero_tol = kZeroTolerance) {
  detail::require(zero_tol >= 0.0, ErrorKind::invalid_argument,
                  "classify: zero_tol must be nonnegative");
  ClassificationReport r;
  r.ell = volterra_level(p, zero_tol);
  r.is_volterra = r.ell && *r.ell == p.dim();
  r.is_strictly_non_volterra = is_strictly_non_volterra(p, zero_tol);
  if (f_partition && matches_f_qso_pattern(p, *f_partition, zero_tol)) {
    r.f_qso_partition = f_partition;
  }
  const auto bc = bistochastic_conditions(p, p.dim() <= kMaxSubsetDim);
  r.bistochastic_necessary_ok = bc.a_ok && bc.b_ok;
  r.bistochastic_sufficient_ok = bc.c_ok;
  r.regularity_margin = regularity_margin(p);
  r.separable_witness = separable_witness(p);
  r.extreme_candidate = is_extreme_candidate(p);
  return r;
}

}  // namespace qso
