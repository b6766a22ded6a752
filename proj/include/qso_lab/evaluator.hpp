#pragma once

// Type-erased simplex maps. An Evaluator carries the polynomial extension of
// the map to all of R^m (for root finding) and, optionally, a log-space step
// that works on u = log x. The log-space step is written as a log-sum-exp over
// the nonnegative terms P_{ij,k} x_i x_j, so coordinates far below the double
// range (1e-308) are still tracked exactly up to relative rounding.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qso_lab/error.hpp"
#include "qso_lab/simplex.hpp"
#include "qso_lab/tensor.hpp"

namespace qso {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

namespace detail {

/// log(sum exp(t)) over the first n entries; -inf for an empty or all -inf set.
inline double log_sum_exp(std::span<const double> terms) {
  double hi = kNegInf;
  for (double t : terms) hi = std::max(hi, t);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - hi);
  return hi + std::log(s);
}

/// Shifts u so that sum exp(u) = 1.
inline void log_normalize(std::span<double> u) {
  const double z = log_sum_exp(u);
  for (double& t : u) t -= z;
}

}  // namespace detail

class Evaluator {
 public:
  /// out = V(x) evaluated as a polynomial, no repair.
  using RawFn = std::function<void(std::span<const double>, std::span<double>)>;
  /// out = log V(exp(u)) up to an additive constant.
  using LogFn = std::function<void(std::span<const double>, std::span<double>)>;

  Evaluator() = default;
  Evaluator(std::size_t m, RawFn raw, LogFn log_step = {}, std::string name = {})
      : m_(m), raw_(std::move(raw)), log_(std::move(log_step)), name_(std::move(name)) {}

  std::size_t dim() const noexcept { return m_; }
  const std::string& name() const noexcept { return name_; }
  bool has_log_step() const noexcept { return static_cast<bool>(log_); }

  void raw_into(std::span<const double> x, std::span<double> out) const {
    detail::require_same_dim(m_, x.size(), "evaluator");
    raw_(x, out);
  }

  std::vector<double> raw(std::span<const double> x) const {
    std::vector<double> out(m_);
    raw_into(x, out);
    return out;
  }

  SimplexPoint operator()(const SimplexPoint& x) const {
    return make_point(raw(x.coords()), Normalization::renormalize);
  }

  /// One step in log coordinates, normalized so that sum exp(out) = 1.
  void log_step(std::span<const double> u, std::span<double> out) const {
    detail::require(has_log_step(), ErrorKind::invalid_argument,
                    "evaluator '" + name_ + "' has no log-space step");
    detail::require_same_dim(m_, u.size(), "evaluator");
    log_(u, out);
    detail::log_normalize(out);
  }

 private:
  std::size_t m_ = 0;
  RawFn raw_;
  LogFn log_;
  std::string name_;
};

/// Applies the map k times to a raw vector (polynomial composition).
inline std::vector<double> raw_power(const Evaluator& v, std::span<const double> x, int k) {
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next(cur.size());
  for (int t = 0; t < k; ++t) {
    v.raw_into(cur, next);
    cur.swap(next);
  }
  return cur;
}

inline SimplexPoint power(const Evaluator& v, const SimplexPoint& x, int k) {
  SimplexPoint cur = x;
  for (int t = 0; t < k; ++t) cur = v(cur);
  return cur;
}

inline Evaluator make_evaluator(const HeredityTensor& p, std::string name = "tensor") {
  auto tensor = std::make_shared<const HeredityTensor>(p);
  const std::size_t m = p.dim();

  // Per output coordinate: (i, j, log c) for i <= j with c = P_{ij,k} (i = j)
  // or 2 P_{ij,k} (i < j), keeping only positive coefficients.
  struct Term {
    std::size_t i;
    std::size_t j;
    double log_c;
  };
  auto terms = std::make_shared<std::vector<std::vector<Term>>>(m);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i; j < m; ++j) {
        const double c = (i == j ? 1.0 : 2.0) * p(i, j, k);
        if (c > 0.0) (*terms)[k].push_back({i, j, std::log(c)});
      }

  auto raw = [tensor](std::span<const double> x, std::span<double> out) {
    const auto y = apply_raw(*tensor, x);
    std::copy(y.begin(), y.end(), out.begin());
  };
  auto log_step = [terms](std::span<const double> u, std::span<double> out) {
    std::vector<double> buf;
    for (std::size_t k = 0; k < terms->size(); ++k) {
      const auto& tk = (*terms)[k];
      buf.resize(tk.size());
      for (std::size_t t = 0; t < tk.size(); ++t) buf[t] = tk[t].log_c + u[tk[t].i] + u[tk[t].j];
      out[k] = detail::log_sum_exp(buf);
    }
  };
  return Evaluator(m, raw, log_step, std::move(name));
}

}  // namespace qso
