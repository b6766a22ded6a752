#pragma once

// Constructors for the named operator families. Every constructor returns a
// validated HeredityTensor or throws qso::Error.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qso_lab/error.hpp"
#include "qso_lab/tensor.hpp"
#include "qso_lab/volterra.hpp"

namespace qso {

enum class ThreeState { v0, v1, mix };

/// V0(x) = (x1² + 2x1x2, x2² + 2x2x3, x3² + 2x1x3)   (Volterra)
/// V1(x) = (x1² + 2x2x3, x2² + 2x1x3, x3² + 2x1x2)   (non-Volterra)
/// mix   = λ V0 + (1 - λ) V1
inline HeredityTensor build_three_state(ThreeState which, double lambda = 1.0) {
  auto v0 = [] {
    CubicArray p(3);
    p(0, 0, 0) = 1.0;
    p(1, 1, 1) = 1.0;
    p(2, 2, 2) = 1.0;
    p.set_sym(0, 1, 0, 1.0);
    p.set_sym(1, 2, 1, 1.0);
    p.set_sym(0, 2, 2, 1.0);
    return HeredityTensor::make(std::move(p));
  };
  auto v1 = [] {
    CubicArray p(3);
    p(0, 0, 0) = 1.0;
    p(1, 1, 1) = 1.0;
    p(2, 2, 2) = 1.0;
    p.set_sym(1, 2, 0, 1.0);
    p.set_sym(0, 2, 1, 1.0);
    p.set_sym(0, 1, 2, 1.0);
    return HeredityTensor::make(std::move(p));
  };
  switch (which) {
    case ThreeState::v0: return v0();
    case ThreeState::v1: return v1();
    case ThreeState::mix:
      detail::require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::invalid_argument,
                      "build_three_state: lambda must lie in [0, 1]");
      return convex_combination(v0(), v1(), lambda);
  }
  throw Error(ErrorKind::invalid_argument, "build_three_state: unknown variant");
}

/// Offspring distribution over {0, ..., m} for each (female, male) pair.
using FertilityTable = std::map<std::pair<std::size_t, std::size_t>, std::vector<double>>;

/// F-QSO on E0 = {0, 1, ..., m}; index 0 is the empty body. `females` is a
/// subset of {1, ..., m}; the rest are males. Same-class pairs (and any pair
/// involving 0) produce the empty body; each female-male pair draws its
/// offspring from `fertility`.
inline HeredityTensor build_f_qso(std::size_t m, const std::set<std::size_t>& females,
                                  const FertilityTable& fertility) {
  detail::require(m >= 1, ErrorKind::invalid_argument, "build_f_qso: m must be at least 1");
  for (std::size_t f : females) {
    detail::require(f >= 1 && f <= m, ErrorKind::invalid_argument,
                    "build_f_qso: female index " + std::to_string(f) + " not in {1..m}");
  }
  const std::size_t n = m + 1;
  CubicArray p(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p(i, j, 0) = 1.0;

  for (std::size_t f : females) {
    for (std::size_t male = 1; male <= m; ++male) {
      if (females.count(male)) continue;
      const auto it = fertility.find({f, male});
      if (it == fertility.end()) {
        throw Error(ErrorKind::invalid_argument,
                    "build_f_qso: no fertility row for pair (" + std::to_string(f) + ", " +
                        std::to_string(male) + ")");
      }
      const auto& row = it->second;
      detail::require(row.size() == n, ErrorKind::dimension_mismatch,
                      "build_f_qso: fertility row must have m + 1 entries");
      double s = 0.0;
      for (double v : row) {
        detail::require(v >= 0.0, ErrorKind::validation, "build_f_qso: negative fertility entry");
        s += v;
      }
      if (std::abs(s - 1.0) > kTensorTolerance) {
        throw Error(ErrorKind::validation, "build_f_qso: fertility row (" + std::to_string(f) +
                                               ", " + std::to_string(male) + ") sums to " +
                                               std::to_string(s));
      }
      for (std::size_t k = 0; k < n; ++k) p.set_sym(f, male, k, row[k]);
    }
  }
  for (const auto& [pair, row] : fertility) {
    const bool valid = females.count(pair.first) && !females.count(pair.second) &&
                       pair.second >= 1 && pair.second <= m;
    detail::require(valid, ErrorKind::invalid_argument,
                    "build_f_qso: fertility row (" + std::to_string(pair.first) + ", " +
                        std::to_string(pair.second) + ") is not a female-male pair");
  }
  return HeredityTensor::make(std::move(p));
}

/// Strictly non-Volterra operator on S²:
///   x' = α y² + c z² + 2yz,  y' = a x² + d z² + 2xz,  z' = b x² + β y² + 2xy,
/// with all parameters >= 0 and a + b = c + d = α + β = 1.
inline HeredityTensor build_strictly_nv_s2(double a, double b, double c, double d, double alpha,
                                           double beta) {
  for (double v : {a, b, c, d, alpha, beta}) {
    detail::require(std::isfinite(v) && v >= 0.0, ErrorKind::invalid_argument,
                    "build_strictly_nv_s2: parameters must be nonnegative");
  }
  detail::require(std::abs(a + b - 1.0) <= kTensorTolerance &&
                      std::abs(c + d - 1.0) <= kTensorTolerance &&
                      std::abs(alpha + beta - 1.0) <= kTensorTolerance,
                  ErrorKind::invalid_argument,
                  "build_strictly_nv_s2: need a + b = c + d = alpha + beta = 1");
  CubicArray p(3);
  p(1, 1, 0) = alpha;
  p(2, 2, 0) = c;
  p.set_sym(1, 2, 0, 1.0);
  p(0, 0, 1) = a;
  p(2, 2, 1) = d;
  p.set_sym(0, 2, 1, 1.0);
  p(0, 0, 2) = b;
  p(1, 1, 2) = beta;
  p.set_sym(0, 1, 2, 1.0);
  return HeredityTensor::make(std::move(p), TensorPolicy::repair);
}

/// P_{ij,k} = (a_ik b_jk + a_jk b_ik) / 2, so that V(x)_k = (A(x))_k (B(x))_k
/// with (A(x))_k = sum_i a_ik x_i.
inline HeredityTensor build_separable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  detail::require(a.rows() == a.cols() && b.rows() == b.cols() && a.rows() == b.rows() &&
                      a.rows() >= 1,
                  ErrorKind::dimension_mismatch,
                  "build_separable: A and B must be square of the same order");
  const auto m = static_cast<std::size_t>(a.rows());
  CubicArray p(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        const auto kk = static_cast<Eigen::Index>(k);
        p(i, j, k) = 0.5 * (a(ii, kk) * b(jj, kk) + a(jj, kk) * b(ii, kk));
      }
  const auto violations = validate(p);
  if (!violations.empty()) {
    std::string msg = "build_separable: induced tensor is invalid:";
    for (std::size_t t = 0; t < violations.size() && t < 5; ++t) {
      msg += " " + violations[t].describe() + ";";
    }
    if (violations.size() > 5) msg += " ...";
    throw Error(ErrorKind::validation, msg);
  }
  return HeredityTensor::make(std::move(p));
}

/// (A(x))_k (B(x))_k, the product form of the separable map.
inline std::vector<double> separable_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                             std::span<const double> x) {
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd ax = a.transpose() * xv;
  const Eigen::VectorXd bx = b.transpose() * xv;
  const Eigen::VectorXd prod = ax.cwiseProduct(bx);
  return {prod.data(), prod.data() + prod.size()};
}

/// Partition of tensor indices into disjoint blocks.
using IndexPartition = std::vector<std::vector<std::size_t>>;

/// A QSO on {0, ..., m} whose same-block parents only produce the empty body 0:
/// P_{ij,k} = 0 for k != 0 whenever i, j share a block. The partition covers
/// either {1..m} (index 0 unconstrained) or {0..m} (0 folded into a block).
inline HeredityTensor build_xi_qso(const IndexPartition& partition, CubicArray entries,
                                   double zero_tol = kZeroTolerance) {
  const std::size_t n = entries.dim();
  detail::require(n >= 2, ErrorKind::invalid_argument,
                  "build_xi_qso: need the empty body plus at least one type");
  std::vector<int> block(n, -1);
  for (std::size_t b = 0; b < partition.size(); ++b) {
    detail::require(!partition[b].empty(), ErrorKind::invalid_argument,
                    "build_xi_qso: empty block");
    for (std::size_t i : partition[b]) {
      detail::require(i < n && block[i] < 0, ErrorKind::invalid_argument,
                      "build_xi_qso: blocks must be disjoint and in range");
      block[i] = static_cast<int>(b);
    }
  }
  for (std::size_t i = 1; i < n; ++i) {
    detail::require(block[i] >= 0, ErrorKind::invalid_argument,
                    "build_xi_qso: index " + std::to_string(i) + " is in no block");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (block[i] < 0 || block[i] != block[j]) continue;
      for (std::size_t k = 1; k < n; ++k) {
        if (std::abs(entries(i, j, k)) > zero_tol) {
          throw Error(ErrorKind::validation,
                      "build_xi_qso: P[" + std::to_string(i) + "][" + std::to_string(j) + "][" +
                          std::to_string(k) + "] must vanish (same-block parents)");
        }
      }
    }
  return HeredityTensor::make(std::move(entries));
}

/// Validation-only constructor for ℓ-Volterra operators.
inline HeredityTensor build_ell_volterra(CubicArray entries, std::size_t ell,
                                         double zero_tol = kZeroTolerance) {
  auto p = HeredityTensor::make(std::move(entries));
  const auto found = volterra_level(p, zero_tol);
  if (!found || *found != ell) {
    throw Error(ErrorKind::validation,
                "build_ell_volterra: tensor is not " + std::to_string(ell) + "-Volterra" +
                    (found ? " (it is " + std::to_string(*found) + "-Volterra)" : ""));
  }
  return p;
}

}  // namespace qso
