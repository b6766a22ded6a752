#pragma once

// Orbits of simplex maps and the analyses run on them: checkpointed
// iteration with running Cesàro means, fixed points and cycles by damped
// Newton, ω-limit clustering, ergodic-average diagnostics, itineraries, and
// convergence-rate fits.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <bit>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qso_lab/error.hpp"
#include "qso_lab/evaluator.hpp"
#include "qso_lab/simplex.hpp"
#include "qso_lab/tensor.hpp"

namespace qso {

// ---------------------------------------------------------------------------
// Iteration

enum class Arithmetic {
  automatic,  // log-space when the evaluator offers it, linear otherwise
  linear,
  log,
};

struct Schedule {
  enum class Kind { geometric, stride };
  Kind kind = Kind::geometric;
  std::size_t stride = 1;

  static Schedule geometric() { return {}; }
  static Schedule every(std::size_t stride = 1) { return {Kind::stride, std::max<std::size_t>(stride, 1)}; }

  /// Steps at which a checkpoint is taken for a run of n steps: 0, powers of
  /// two below n, and n (geometric), or multiples of the stride plus n.
  std::vector<std::size_t> steps(std::size_t n) const {
    std::vector<std::size_t> out{0};
    if (kind == Kind::geometric) {
      for (std::size_t s = 1; s < n; s *= 2) out.push_back(s);
    } else {
      for (std::size_t s = stride; s < n; s += stride) out.push_back(s);
    }
    if (n > 0) out.push_back(n);
    return out;
  }
};

struct IterateOptions {
  Schedule schedule = Schedule::geometric();
  std::size_t tail_window = 512;
  Arithmetic arithmetic = Arithmetic::automatic;
};

/// A run of identical consecutive tail points.
struct TailRun {
  SimplexPoint point;
  std::size_t first_step = 0;
  std::size_t count = 0;
};

struct Checkpoint {
  std::size_t step = 0;
  SimplexPoint point;
};

struct TrajectoryRecord {
  Evaluator op;
  SimplexPoint x0;
  std::size_t n_steps = 0;
  IterateOptions options;
  bool used_log_space = false;
  std::vector<Checkpoint> checkpoints;
  std::vector<Checkpoint> cesaro_checkpoints;
  /// The last `tail_window` points x^(n-W+1..n), run-length encoded.
  std::vector<TailRun> tail;

  const SimplexPoint& last() const { return tail.back().point; }
  std::size_t tail_size() const {
    std::size_t s = 0;
    for (const auto& r : tail) s += r.count;
    return s;
  }
};

namespace detail {

inline bool resolve_log_space(const Evaluator& v, Arithmetic a) {
  switch (a) {
    case Arithmetic::linear: return false;
    case Arithmetic::log:
      require(v.has_log_step(), ErrorKind::invalid_argument,
              "log-space iteration requested but the evaluator has none");
      return true;
    case Arithmetic::automatic: return v.has_log_step();
  }
  return false;
}

/// Visits x^(0), ..., x^(n) in order. The visitor gets (step, point).
template <class Visitor>
void walk(const Evaluator& v, const SimplexPoint& x0, std::size_t n, bool log_space,
          Visitor&& visit) {
  require_same_dim(v.dim(), x0.dim(), "iterate");
  const std::size_t m = x0.dim();
  if (!log_space) {
    SimplexPoint x = x0;
    std::vector<double> buf(m);
    for (std::size_t step = 0;; ++step) {
      visit(step, x);
      if (step == n) break;
      v.raw_into(x.coords(), buf);
      x = make_point(buf, Normalization::renormalize);
    }
    return;
  }
  std::vector<double> u(m);
  std::vector<double> next(m);
  std::vector<double> lin(m);
  for (std::size_t i = 0; i < m; ++i) u[i] = x0[i] > 0.0 ? std::log(x0[i]) : kNegInf;
  for (std::size_t step = 0;; ++step) {
    if (step == 0) {
      visit(step, x0);
    } else {
      for (std::size_t i = 0; i < m; ++i) lin[i] = std::exp(u[i]);
      visit(step, make_point(lin, Normalization::renormalize));
    }
    if (step == n) break;
    v.log_step(u, next);
    u.swap(next);
  }
}

/// Neumaier-compensated running sum of vectors.
class CompensatedSum {
 public:
  explicit CompensatedSum(std::size_t m) : sum_(m, 0.0), comp_(m, 0.0) {}
  void add(std::span<const double> x) {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      const double t = sum_[i] + x[i];
      if (std::abs(sum_[i]) >= std::abs(x[i])) {
        comp_[i] += (sum_[i] - t) + x[i];
      } else {
        comp_[i] += (x[i] - t) + sum_[i];
      }
      sum_[i] = t;
    }
  }
  double value(std::size_t i) const { return sum_[i] + comp_[i]; }
  std::size_t size() const { return sum_.size(); }

 private:
  std::vector<double> sum_;
  std::vector<double> comp_;
};

}  // namespace detail

/// Runs n steps from x0, recording checkpoints, running Cesàro means
/// s_k = (1/(k+1)) sum_{t<=k} x^(t) at the same steps, and the tail window.
inline TrajectoryRecord iterate(const Evaluator& v, const SimplexPoint& x0, std::size_t n,
                                IterateOptions options = {}) {
  TrajectoryRecord rec;
  rec.op = v;
  rec.x0 = x0;
  rec.n_steps = n;
  rec.options = options;
  rec.used_log_space = detail::resolve_log_space(v, options.arithmetic);

  const auto steps = options.schedule.steps(n);
  std::size_t next_cp = 0;
  detail::CompensatedSum sum(x0.dim());
  std::deque<TailRun> tail;
  std::size_t tail_count = 0;
  const std::size_t window = std::max<std::size_t>(options.tail_window, 1);

  detail::walk(v, x0, n, rec.used_log_space, [&](std::size_t step, const SimplexPoint& x) {
    sum.add(x.coords());
    if (next_cp < steps.size() && steps[next_cp] == step) {
      rec.checkpoints.push_back({step, x});
      std::vector<double> mean(x.dim());
      for (std::size_t i = 0; i < mean.size(); ++i)
        mean[i] = sum.value(i) / static_cast<double>(step + 1);
      rec.cesaro_checkpoints.push_back({step, make_point(std::move(mean))});
      ++next_cp;
    }
    if (step + window > n) {
      if (!tail.empty() && tail.back().point == x) {
        ++tail.back().count;
      } else {
        tail.push_back({x, step, 1});
      }
      ++tail_count;
    }
  });
  (void)tail_count;
  rec.tail.assign(tail.begin(), tail.end());
  return rec;
}

// ---------------------------------------------------------------------------
// Fixed points and cycles

enum class Stability { attracting, repelling, saddle, nonhyperbolic };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::attracting: return "attracting";
    case Stability::repelling: return "repelling";
    case Stability::saddle: return "saddle";
    case Stability::nonhyperbolic: return "nonhyperbolic";
  }
  return "unknown";
}

struct FixedPoint {
  SimplexPoint point;
  double residual = 0.0;
  Stability stability = Stability::nonhyperbolic;
  /// |eigenvalues| of the map restricted to the simplex's tangent space,
  /// in decreasing order.
  std::vector<double> spectrum;
};

struct FixedPointReport {
  std::vector<FixedPoint> points;
  /// False when no start converged; the empty report is still valid.
  bool any_converged = false;
};

struct RootSearchOptions {
  std::size_t n_starts = 64;
  std::uint64_t seed = 0;
  /// Accepted roots satisfy distance(V^k(x), x) <= tol.
  double tol = 1e-10;
  double dedup_distance = 1e-8;
  double hyperbolic_band = 1e-9;
  int max_newton_iterations = 80;
};

namespace detail {

// Central-difference step; a power of two close to 1e-7 so y +- h rounds
// as little as possible.
inline constexpr double kFdStep = 1.0 / 8388608.0;  // 2^-23

inline std::vector<double> lift(const Eigen::VectorXd& y) {
  std::vector<double> x(static_cast<std::size_t>(y.size()) + 1);
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    x[static_cast<std::size_t>(i)] = y(i);
    s += y(i);
  }
  x.back() = 1.0 - s;
  return x;
}

/// First m-1 coordinates of V^k on the hyperplane sum x = 1.
inline Eigen::VectorXd reduced_map(const Evaluator& v, const Eigen::VectorXd& y, int k) {
  const auto x = raw_power(v, lift(y), k);
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out(i) = x[static_cast<std::size_t>(i)];
  return out;
}

inline Eigen::MatrixXd reduced_jacobian(const Evaluator& v, const Eigen::VectorXd& y, int k) {
  const Eigen::Index d = y.size();
  Eigen::MatrixXd jac(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    Eigen::VectorXd yp = y;
    Eigen::VectorXd ym = y;
    yp(c) += kFdStep;
    ym(c) -= kFdStep;
    jac.col(c) = (reduced_map(v, yp, k) - reduced_map(v, ym, k)) / (2.0 * kFdStep);
  }
  return jac;
}

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

/// Damped Newton on F(y) = G_k(y) - y. Returns the simplex point if the
/// root lies on the simplex and meets the residual bound.
inline std::optional<SimplexPoint> newton_root(const Evaluator& v, const SimplexPoint& seed, int k,
                                               const RootSearchOptions& opt) {
  const std::size_t m = v.dim();
  if (m == 1) return seed;
  const auto d = static_cast<Eigen::Index>(m - 1);
  Eigen::VectorXd y(d);
  for (Eigen::Index i = 0; i < d; ++i) y(i) = seed[static_cast<std::size_t>(i)];

  auto residual = [&](const Eigen::VectorXd& z) { return Eigen::VectorXd(reduced_map(v, z, k) - z); };
  Eigen::VectorXd f = residual(y);
  if (!all_finite(f)) return std::nullopt;
  double nf = f.cwiseAbs().maxCoeff();
  for (int it = 0; it < opt.max_newton_iterations && nf > 1e-15; ++it) {
    Eigen::MatrixXd jac = reduced_jacobian(v, y, k) - Eigen::MatrixXd::Identity(d, d);
    if (!jac.allFinite()) return std::nullopt;
    const Eigen::VectorXd step = jac.fullPivLu().solve(-f);
    if (!all_finite(step)) return std::nullopt;
    double t = 1.0;
    bool accepted = false;
    while (t > 1e-6) {
      const Eigen::VectorXd y_try = y + t * step;
      const Eigen::VectorXd f_try = residual(y_try);
      if (all_finite(f_try) && f_try.cwiseAbs().maxCoeff() < nf) {
        y = y_try;
        f = f_try;
        nf = f.cwiseAbs().maxCoeff();
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || (t * step).cwiseAbs().maxCoeff() < 1e-16) break;
    // Iterates far off the simplex will not come back to a root on it.
    if (y.cwiseAbs().maxCoeff() > 10.0) return std::nullopt;
  }
  const auto raw = lift(y);
  for (double c : raw)
    if (!(c >= kClampFloor)) return std::nullopt;
  const SimplexPoint x = make_point(raw);
  if (!(distance(power(v, x, k), x) <= opt.tol)) return std::nullopt;
  return x;
}

/// Vertices, barycenter, face barycenters, then random interior and face
/// points.
inline std::vector<SimplexPoint> root_seeds(std::size_t m, std::size_t n_random,
                                            std::uint64_t seed) {
  std::vector<SimplexPoint> seeds = vertices(m);
  seeds.push_back(barycenter(m));
  if (m <= 10) {
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << m); ++mask) {
      const int bits = std::popcount(mask);
      if (bits >= 2) seeds.push_back(face_barycenter(m, mask));
    }
  }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t s = 0; s < n_random; ++s) {
    std::vector<double> x = sample_uniform(m, rng).vec();
    if (m > 2 && s % 2 == 1) {
      // restrict every other draw to a random proper face
      std::vector<double> masked = x;
      for (double& c : masked)
        if (coin(rng)) c = 0.0;
      if (std::accumulate(masked.begin(), masked.end(), 0.0) > 0.0) x = masked;
    }
    seeds.push_back(make_point(std::move(x)));
  }
  return seeds;
}

inline bool near_any(const std::vector<SimplexPoint>& pts, const SimplexPoint& x, double tol) {
  return std::any_of(pts.begin(), pts.end(),
                     [&](const SimplexPoint& p) { return distance(p, x) < tol; });
}

}  // namespace detail

/// Spectrum (decreasing |λ|) of the map at x restricted to the tangent space.
inline std::vector<double> tangent_spectrum(const Evaluator& v, const SimplexPoint& x, int k = 1) {
  const std::size_t m = v.dim();
  if (m == 1) return {};
  Eigen::VectorXd y(static_cast<Eigen::Index>(m - 1));
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = x[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd jac = detail::reduced_jacobian(v, y, k);
  Eigen::EigenSolver<Eigen::MatrixXd> es(jac, false);
  std::vector<double> mags;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mags.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  return mags;
}

inline Stability classify_spectrum(const std::vector<double>& mags, double band = 1e-9) {
  bool any_in = false;
  bool any_out = false;
  bool any_band = false;
  for (double mg : mags) {
    if (mg < 1.0 - band) {
      any_in = true;
    } else if (mg > 1.0 + band) {
      any_out = true;
    } else {
      any_band = true;
    }
  }
  if (any_band) return Stability::nonhyperbolic;
  if (any_in && any_out) return Stability::saddle;
  return any_out ? Stability::repelling : Stability::attracting;
}

/// Multi-start damped Newton for V(x) = x on the simplex.
inline FixedPointReport find_fixed_points(const Evaluator& v, const RootSearchOptions& opt = {}) {
  detail::require(opt.n_starts >= 1, ErrorKind::invalid_argument,
                  "find_fixed_points: n_starts must be positive");
  FixedPointReport report;
  std::vector<SimplexPoint> found;
  for (const auto& seed : detail::root_seeds(v.dim(), opt.n_starts, opt.seed)) {
    auto root = detail::newton_root(v, seed, 1, opt);
    if (!root || detail::near_any(found, *root, opt.dedup_distance)) continue;
    found.push_back(*root);
  }
  std::sort(found.begin(), found.end(), [](const SimplexPoint& a, const SimplexPoint& b) {
    return a.vec() > b.vec();
  });
  for (const auto& x : found) {
    FixedPoint fp;
    fp.point = x;
    fp.residual = distance(v(x), x);
    fp.spectrum = tangent_spectrum(v, x);
    fp.stability = classify_spectrum(fp.spectrum, opt.hyperbolic_band);
    report.points.push_back(std::move(fp));
  }
  report.any_converged = !report.points.empty();
  return report;
}

struct Cycle {
  int period = 0;
  std::vector<SimplexPoint> points;  // orbit order, starting at the lexicographically largest
};

/// Cycles of minimal period 2..max_period, deduplicated up to rotation.
inline std::vector<Cycle> detect_cycles(const Evaluator& v, int max_period,
                                        const RootSearchOptions& opt = {}) {
  detail::require(max_period >= 2 && max_period <= 12, ErrorKind::invalid_argument,
                  "detect_cycles: max_period must lie in 2..12");
  std::vector<Cycle> out;
  const auto seeds = detail::root_seeds(v.dim(), opt.n_starts, opt.seed);
  for (int k = 2; k <= max_period; ++k) {
    for (const auto& seed : seeds) {
      auto root = detail::newton_root(v, seed, k, opt);
      if (!root) continue;
      bool minimal = true;
      for (int d = 1; d < k && minimal; ++d)
        if (k % d == 0 && distance(power(v, *root, d), *root) <= opt.dedup_distance) minimal = false;
      if (!minimal) continue;
      const bool known = std::any_of(out.begin(), out.end(), [&](const Cycle& c) {
        return c.period == k && detail::near_any(c.points, *root, opt.dedup_distance);
      });
      if (known) continue;
      Cycle c{k, {}};
      SimplexPoint x = *root;
      for (int t = 0; t < k; ++t) {
        c.points.push_back(x);
        x = v(x);
      }
      const auto lead = std::max_element(c.points.begin(), c.points.end(),
                                         [](const SimplexPoint& a, const SimplexPoint& b) {
                                           return a.vec() < b.vec();
                                         });
      std::rotate(c.points.begin(), lead, c.points.end());
      out.push_back(std::move(c));
    }
  }
  return out;
}

/// Cycles of the partial map e_k -> e_j defined where V(e_k) is exactly
/// (within tol) a vertex. Each cycle lists vertex indices in orbit order,
/// starting at its least index.
inline std::vector<std::vector<std::size_t>> vertex_cycles(const HeredityTensor& p,
                                                           double tol = kTensorTolerance) {
  const std::size_t m = p.dim();
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> image(m, none);
  for (std::size_t k = 0; k < m; ++k) {
    const SimplexPoint y = apply(p, vertex(m, k));
    for (std::size_t j = 0; j < m; ++j) {
      if (std::abs(y[j] - 1.0) <= tol) {
        image[k] = j;
        break;
      }
    }
  }
  std::vector<std::vector<std::size_t>> cycles;
  std::vector<int> state(m, 0);  // 0 new, 1 on current path, 2 done
  for (std::size_t s = 0; s < m; ++s) {
    if (state[s] != 0) continue;
    std::vector<std::size_t> path;
    std::size_t i = s;
    while (i != none && state[i] == 0) {
      state[i] = 1;
      path.push_back(i);
      i = image[i];
    }
    if (i != none && state[i] == 1) {
      const auto start = std::find(path.begin(), path.end(), i);
      std::vector<std::size_t> c(start, path.end());
      std::rotate(c.begin(), std::min_element(c.begin(), c.end()), c.end());
      cycles.push_back(std::move(c));
    }
    for (std::size_t t : path) state[t] = 2;
  }
  std::sort(cycles.begin(), cycles.end());
  return cycles;
}

// ---------------------------------------------------------------------------
// ω-limit estimate

struct Cluster {
  SimplexPoint centroid;  // weighted by visit count
  double diameter = 0.0;  // sup-norm
  std::size_t visits = 0;
};

struct OmegaLimitEstimate {
  std::vector<Cluster> clusters;
  /// min over the tail of the smallest coordinate
  double boundary_proximity = 0.0;
  bool converged = false;
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) i = parent_[i] = parent_[parent_[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Single-linkage clusters of the tail at sup-norm threshold cluster_tol.
inline OmegaLimitEstimate omega_limit_estimate(const TrajectoryRecord& traj, double cluster_tol) {
  detail::require(!traj.tail.empty(), ErrorKind::invalid_argument,
                  "omega_limit_estimate: empty tail");
  detail::require(cluster_tol > 0.0, ErrorKind::invalid_argument,
                  "omega_limit_estimate: cluster_tol must be positive");
  OmegaLimitEstimate est;
  est.boundary_proximity = 1.0;

  // Distinct points with visit counts.
  std::map<std::vector<double>, std::size_t> index;
  std::vector<const SimplexPoint*> pts;
  std::vector<std::size_t> weight;
  for (const auto& run : traj.tail) {
    est.boundary_proximity = std::min(est.boundary_proximity, min_coordinate(run.point));
    auto [it, inserted] = index.try_emplace(run.point.vec(), pts.size());
    if (inserted) {
      pts.push_back(&run.point);
      weight.push_back(0);
    }
    weight[it->second] += run.count;
  }
  const std::size_t n = pts.size();
  const std::size_t m = traj.x0.dim();

  // Grid of side cluster_tol: points sharing a cell are linked; linked
  // points otherwise sit in neighbouring cells.
  using Key = std::vector<long long>;
  std::map<Key, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    Key key(m);
    for (std::size_t c = 0; c < m; ++c)
      key[c] = static_cast<long long>(std::floor((*pts[i])[c] / cluster_tol));
    cells[key].push_back(i);
  }
  detail::UnionFind uf(n);
  for (const auto& [key, members] : cells)
    for (std::size_t t = 1; t < members.size(); ++t) uf.unite(members[0], members[t]);

  std::vector<const std::pair<const Key, std::vector<std::size_t>>*> cell_list;
  for (const auto& entry : cells) cell_list.push_back(&entry);
  auto adjacent = [](const Key& a, const Key& b) {
    for (std::size_t c = 0; c < a.size(); ++c)
      if (std::abs(a[c] - b[c]) > 1) return false;
    return true;
  };
  for (std::size_t a = 0; a < cell_list.size(); ++a) {
    for (std::size_t b = a + 1; b < cell_list.size(); ++b) {
      const auto& [ka, ma] = *cell_list[a];
      const auto& [kb, mb] = *cell_list[b];
      if (!adjacent(ka, kb) || uf.find(ma[0]) == uf.find(mb[0])) continue;
      bool linked = false;
      for (std::size_t i : ma) {
        for (std::size_t j : mb) {
          if (distance(*pts[i], *pts[j]) < cluster_tol) {
            linked = true;
            break;
          }
        }
        if (linked) break;
      }
      if (linked) uf.unite(ma[0], mb[0]);
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);
  for (const auto& [root, members] : groups) {
    Cluster c;
    std::vector<double> lo(m, 2.0);
    std::vector<double> hi(m, -1.0);
    std::vector<double> mean(m, 0.0);
    for (std::size_t i : members) {
      c.visits += weight[i];
      for (std::size_t d = 0; d < m; ++d) {
        const double x = (*pts[i])[d];
        lo[d] = std::min(lo[d], x);
        hi[d] = std::max(hi[d], x);
        mean[d] += static_cast<double>(weight[i]) * x;
      }
    }
    for (std::size_t d = 0; d < m; ++d) {
      c.diameter = std::max(c.diameter, hi[d] - lo[d]);
      mean[d] /= static_cast<double>(c.visits);
    }
    c.centroid = make_point(std::move(mean));
    est.clusters.push_back(std::move(c));
  }
  std::stable_sort(est.clusters.begin(), est.clusters.end(),
                   [](const Cluster& a, const Cluster& b) { return a.visits > b.visits; });
  est.converged = est.clusters.size() == 1 && est.clusters.front().diameter < cluster_tol;
  return est;
}

// ---------------------------------------------------------------------------
// Ergodic averages

enum class CesaroVerdict { converging, oscillating, inconclusive };

inline const char* to_string(CesaroVerdict v) {
  switch (v) {
    case CesaroVerdict::converging: return "converging";
    case CesaroVerdict::oscillating: return "oscillating";
    case CesaroVerdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

struct CesaroThresholds {
  double converging_below = 1e-3;
  double oscillating_above = 5e-2;
};

struct CesaroDiagnostic {
  /// max pairwise spread of each coordinate (or observable) over the window
  std::vector<double> oscillation_per_coordinate;
  double oscillation = 0.0;
  CesaroVerdict verdict = CesaroVerdict::inconclusive;
  std::size_t window_begin_step = 0;
  std::size_t n_checkpoints = 0;
};

namespace detail {

/// series[c][f]: value of observable f at checkpoint c.
inline CesaroDiagnostic spread_diagnostic(const std::vector<std::vector<double>>& series,
                                          const std::vector<std::size_t>& steps,
                                          CesaroThresholds th) {
  require(series.size() >= 4, ErrorKind::invalid_argument,
          "cesaro_diagnostic: need at least 4 checkpoints in the window");
  CesaroDiagnostic d;
  const std::size_t nf = series.front().size();
  d.oscillation_per_coordinate.assign(nf, 0.0);
  for (std::size_t f = 0; f < nf; ++f) {
    double lo = series.front()[f];
    double hi = lo;
    for (const auto& row : series) {
      lo = std::min(lo, row[f]);
      hi = std::max(hi, row[f]);
    }
    d.oscillation_per_coordinate[f] = hi - lo;
    d.oscillation = std::max(d.oscillation, hi - lo);
  }
  d.window_begin_step = steps.front();
  d.n_checkpoints = series.size();
  if (d.oscillation < th.converging_below) {
    d.verdict = CesaroVerdict::converging;
  } else if (d.oscillation > th.oscillating_above) {
    d.verdict = CesaroVerdict::oscillating;
  } else {
    d.verdict = CesaroVerdict::inconclusive;
  }
  return d;
}

}  // namespace detail

/// Spread of the Cesàro means over the last half of the checkpoints.
inline CesaroDiagnostic cesaro_diagnostic(const TrajectoryRecord& traj,
                                          CesaroThresholds th = {}) {
  const auto& cps = traj.cesaro_checkpoints;
  std::vector<std::vector<double>> series;
  std::vector<std::size_t> steps;
  for (std::size_t c = cps.size() / 2; c < cps.size(); ++c) {
    series.push_back(cps[c].point.vec());
    steps.push_back(cps[c].step);
  }
  return detail::spread_diagnostic(series, steps, th);
}

using Observable = std::function<double(const SimplexPoint&)>;

inline std::vector<Observable> coordinate_projections(std::size_t m) {
  std::vector<Observable> fs;
  for (std::size_t i = 0; i < m; ++i) fs.push_back([i](const SimplexPoint& x) { return x[i]; });
  return fs;
}

struct HistoricReport {
  std::vector<std::size_t> steps;
  /// means[c][f] = (1/(step+1)) sum_{t <= step} f(x^(t))
  std::vector<std::vector<double>> means;
  CesaroDiagnostic diagnostic;
};

/// Partial averages of observables along the orbit. With the coordinate
/// projections this reproduces cesaro_diagnostic.
inline HistoricReport historic_behavior_test(const Evaluator& v, const SimplexPoint& x0,
                                             std::vector<Observable> fs, std::size_t n,
                                             Schedule schedule = Schedule::geometric(),
                                             Arithmetic arithmetic = Arithmetic::automatic,
                                             CesaroThresholds th = {}) {
  if (fs.empty()) fs = coordinate_projections(x0.dim());
  HistoricReport rep;
  const auto steps = schedule.steps(n);
  std::size_t next_cp = 0;
  detail::CompensatedSum sum(fs.size());
  std::vector<double> vals(fs.size());
  detail::walk(v, x0, n, detail::resolve_log_space(v, arithmetic),
               [&](std::size_t step, const SimplexPoint& x) {
                 for (std::size_t f = 0; f < fs.size(); ++f) vals[f] = fs[f](x);
                 sum.add(vals);
                 if (next_cp < steps.size() && steps[next_cp] == step) {
                   std::vector<double> mean(fs.size());
                   for (std::size_t f = 0; f < fs.size(); ++f)
                     mean[f] = sum.value(f) / static_cast<double>(step + 1);
                   rep.steps.push_back(step);
                   rep.means.push_back(std::move(mean));
                   ++next_cp;
                 }
               });
  const std::size_t half = rep.means.size() / 2;
  std::vector<std::vector<double>> window(rep.means.begin() + static_cast<std::ptrdiff_t>(half),
                                          rep.means.end());
  std::vector<std::size_t> wsteps(rep.steps.begin() + static_cast<std::ptrdiff_t>(half),
                                  rep.steps.end());
  rep.diagnostic = detail::spread_diagnostic(window, wsteps, th);
  return rep;
}

// ---------------------------------------------------------------------------
// Itinerary

struct ItineraryReport {
  /// Indices into the fixed-point list, consecutive repeats merged.
  std::vector<std::size_t> labels;
  double occupancy_fraction = 0.0;
  double radius = 0.0;
  std::size_t steps_inside = 0;
};

/// Replays the orbit step by step and records which fixed-point balls
/// (sup-norm radius) it passes through.
inline ItineraryReport itinerary(const TrajectoryRecord& traj, const FixedPointReport& fixed,
                                 double radius) {
  detail::require(!fixed.points.empty(), ErrorKind::invalid_argument,
                  "itinerary: fixed point set is empty");
  detail::require(radius > 0.0, ErrorKind::invalid_argument, "itinerary: radius must be positive");
  const auto& fps = fixed.points;
  for (std::size_t a = 0; a < fps.size(); ++a)
    for (std::size_t b = a + 1; b < fps.size(); ++b)
      if (distance(fps[a].point, fps[b].point) <= 2.0 * radius) {
        throw Error(ErrorKind::invalid_argument,
                    "itinerary: balls around fixed points " + std::to_string(a + 1) + " and " +
                        std::to_string(b + 1) + " overlap; shrink the radius");
      }
  ItineraryReport rep;
  rep.radius = radius;
  detail::walk(traj.op, traj.x0, traj.n_steps, traj.used_log_space,
               [&](std::size_t step, const SimplexPoint& x) {
                 if (step == 0) return;
                 for (std::size_t f = 0; f < fps.size(); ++f) {
                   if (distance(x, fps[f].point) <= radius) {
                     ++rep.steps_inside;
                     if (rep.labels.empty() || rep.labels.back() != f) rep.labels.push_back(f);
                     break;
                   }
                 }
               });
  rep.occupancy_fraction =
      traj.n_steps == 0 ? 0.0
                        : static_cast<double>(rep.steps_inside) / static_cast<double>(traj.n_steps);
  return rep;
}

// ---------------------------------------------------------------------------
// Convergence rate

struct RateFit {
  double rate = 1.0;       // exp(slope of log d_n against n)
  double r_squared = 1.0;  // NaN when fewer than two points were usable
  std::size_t n_points = 0;
  /// d_n dropped below the saturation floor; the fit used the prefix.
  bool saturated = false;
};

inline constexpr double kSaturationFloor = 1e-15;

/// Least-squares fit of log distance(x^(n), target) over the last decade of
/// checkpoints before saturation.
inline RateFit convergence_rate(const TrajectoryRecord& traj, const SimplexPoint& target) {
  std::vector<std::pair<double, double>> usable;  // (step, log d)
  RateFit fit;
  for (const auto& cp : traj.checkpoints) {
    const double d = distance(cp.point, target);
    if (d < kSaturationFloor) {
      fit.saturated = true;
      break;
    }
    usable.emplace_back(static_cast<double>(cp.step), std::log(d));
  }
  if (usable.size() < 2) {
    // Hit the target within one checkpoint: faster than any exponential.
    fit.rate = usable.empty() || fit.saturated ? 0.0 : 1.0;
    fit.r_squared = std::numeric_limits<double>::quiet_NaN();
    fit.n_points = usable.size();
    return fit;
  }
  const double last = usable.back().first;
  std::vector<std::pair<double, double>> window;
  for (const auto& p : usable)
    if (p.first >= last / 10.0) window.push_back(p);
  if (window.size() < 2) window.assign(usable.end() - 2, usable.end());

  const auto n = static_cast<double>(window.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [s, l] : window) {
    mx += s;
    my += l;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& [s, l] : window) {
    sxx += (s - mx) * (s - mx);
    sxy += (s - mx) * (l - my);
    syy += (l - my) * (l - my);
  }
  const double slope = sxy / sxx;
  fit.rate = std::exp(slope);
  fit.r_squared = syy <= 1e-300 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.n_points = window.size();
  return fit;
}

}  // namespace qso
