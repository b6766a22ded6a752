#pragma once

// QSOs generated by a positive measure on the cells Φ^Λ of a finite graph:
//   P_{σ1σ2,σ} = μ(σ) / μ(Ω(G, σ1, σ2))  for σ ∈ Ω(G, σ1, σ2), else 0,
// where Ω(G, σ1, σ2) holds the cells agreeing on every connected component
// with σ1 or with σ2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qso_lab/error.hpp"
#include "qso_lab/simplex.hpp"
#include "qso_lab/tensor.hpp"

namespace qso {

inline constexpr std::size_t kMaxCells = 4096;

class GraphSpec {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  GraphSpec() = default;

  /// Edges are unordered; loops and repeated edges are rejected.
  static GraphSpec make(std::size_t n_vertices, std::vector<Edge> edges) {
    detail::require(n_vertices >= 1, ErrorKind::invalid_argument,
                    "graph: need at least one vertex");
    std::set<Edge> seen;
    for (auto& [u, v] : edges) {
      detail::require(u < n_vertices && v < n_vertices, ErrorKind::invalid_argument,
                      "graph: edge endpoint out of range");
      detail::require(u != v, ErrorKind::invalid_argument,
                      "graph: loop at vertex " + std::to_string(u + 1));
      if (u > v) std::swap(u, v);
      detail::require(seen.insert({u, v}).second, ErrorKind::invalid_argument,
                      "graph: duplicate edge {" + std::to_string(u + 1) + ", " +
                          std::to_string(v + 1) + "}");
    }
    std::sort(edges.begin(), edges.end());
    GraphSpec g;
    g.n_ = n_vertices;
    g.edges_ = std::move(edges);
    return g;
  }

  std::size_t n_vertices() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  bool operator==(const GraphSpec&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
};

/// Connected components, each sorted, ordered by least vertex.
inline std::vector<std::vector<std::size_t>> components(const GraphSpec& g) {
  const std::size_t n = g.n_vertices();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [u, v] : g.edges()) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<bool> seen(n, false);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> comp{s};
    seen[s] = true;
    for (std::size_t head = 0; head < comp.size(); ++head)
      for (std::size_t w : adj[comp[head]])
        if (!seen[w]) {
          seen[w] = true;
          comp.push_back(w);
        }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

inline bool is_connected(const GraphSpec& g) { return components(g).size() == 1; }

/// The subgraph induced on `vertices`, relabelled 0..k-1 in increasing order.
inline GraphSpec induced_subgraph(const GraphSpec& g, const std::vector<std::size_t>& vertices) {
  std::vector<std::size_t> sorted = vertices;
  std::sort(sorted.begin(), sorted.end());
  auto local = [&](std::size_t v) -> std::size_t {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
    return (it != sorted.end() && *it == v) ? static_cast<std::size_t>(it - sorted.begin())
                                            : std::numeric_limits<std::size_t>::max();
  };
  std::vector<GraphSpec::Edge> edges;
  for (const auto& [u, v] : g.edges()) {
    const std::size_t lu = local(u);
    const std::size_t lv = local(v);
    if (lu != std::numeric_limits<std::size_t>::max() && lv != std::numeric_limits<std::size_t>::max())
      edges.emplace_back(lu, lv);
  }
  return GraphSpec::make(sorted.size(), std::move(edges));
}

/// Cells Φ^Λ indexed lexicographically with vertex 0 most significant.
class CellSpace {
 public:
  using Cell = std::vector<std::size_t>;  // allele index per vertex

  CellSpace() = default;

  static CellSpace make(GraphSpec graph, std::vector<std::string> alleles,
                        std::size_t max_cells = kMaxCells) {
    detail::require(alleles.size() >= 2, ErrorKind::invalid_argument,
                    "cell space: need at least two alleles");
    const std::set<std::string> distinct(alleles.begin(), alleles.end());
    detail::require(distinct.size() == alleles.size(), ErrorKind::invalid_argument,
                    "cell space: allele labels must be distinct");
    std::size_t size = 1;
    for (std::size_t v = 0; v < graph.n_vertices(); ++v) {
      detail::require(size <= max_cells / alleles.size(), ErrorKind::limit_exceeded,
                      "cell space: more than " + std::to_string(max_cells) + " cells");
      size *= alleles.size();
    }
    CellSpace s;
    s.graph_ = std::move(graph);
    s.alleles_ = std::move(alleles);
    s.size_ = size;
    return s;
  }

  const GraphSpec& graph() const noexcept { return graph_; }
  const std::vector<std::string>& alleles() const noexcept { return alleles_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t n_vertices() const noexcept { return graph_.n_vertices(); }

  Cell cell(std::size_t index) const {
    detail::require(index < size_, ErrorKind::invalid_argument, "cell space: index out of range");
    Cell c(n_vertices());
    const std::size_t q = alleles_.size();
    for (std::size_t v = n_vertices(); v-- > 0;) {
      c[v] = index % q;
      index /= q;
    }
    return c;
  }

  std::size_t index(const Cell& c) const {
    detail::require_same_dim(n_vertices(), c.size(), "cell space");
    std::size_t idx = 0;
    for (std::size_t a : c) {
      detail::require(a < alleles_.size(), ErrorKind::invalid_argument,
                      "cell space: allele index out of range");
      idx = idx * alleles_.size() + a;
    }
    return idx;
  }

  /// Allele labels joined by ','.
  std::string label(std::size_t index) const {
    std::string out;
    for (std::size_t a : cell(index)) {
      if (!out.empty()) out += ',';
      out += alleles_[a];
    }
    return out;
  }

  bool operator==(const CellSpace&) const = default;

 private:
  GraphSpec graph_;
  std::vector<std::string> alleles_;
  std::size_t size_ = 0;
};

class CellMeasure {
 public:
  CellMeasure() = default;

  /// Weights must be strictly positive; they are divided by their sum.
  static CellMeasure make(CellSpace space, std::vector<double> weights) {
    detail::require_same_dim(space.size(), weights.size(), "cell measure");
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      detail::require(std::isfinite(weights[i]) && weights[i] > 0.0, ErrorKind::validation,
                      "cell measure: weight of cell " + space.label(i) + " must be positive");
      s += weights[i];
    }
    for (double& w : weights) w /= s;
    CellMeasure mu;
    mu.space_ = std::move(space);
    mu.weights_ = std::move(weights);
    return mu;
  }

  const CellSpace& space() const noexcept { return space_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double operator[](std::size_t cell) const { return weights_[cell]; }

 private:
  CellSpace space_;
  std::vector<double> weights_;
};

/// Positive weights drawn uniformly from (lo, 1], normalized.
template <class Rng>
CellMeasure random_measure(const CellSpace& space, Rng& rng, double lo = 0.05) {
  std::uniform_real_distribution<double> u(lo, 1.0);
  std::vector<double> w(space.size());
  for (double& x : w) x = u(rng);
  return CellMeasure::make(space, std::move(w));
}

/// Ω(G, σ1, σ2), sorted by cell index.
inline std::vector<std::size_t> omega_set(const CellSpace& space, std::size_t sigma1,
                                          std::size_t sigma2) {
  const auto c1 = space.cell(sigma1);
  const auto c2 = space.cell(sigma2);
  std::vector<std::vector<std::size_t>> differing;
  for (const auto& comp : components(space.graph())) {
    const bool same = std::all_of(comp.begin(), comp.end(),
                                  [&](std::size_t v) { return c1[v] == c2[v]; });
    if (!same) differing.push_back(comp);
  }
  std::vector<std::size_t> out;
  const std::uint64_t choices = std::uint64_t{1} << differing.size();
  for (std::uint64_t mask = 0; mask < choices; ++mask) {
    auto c = c1;
    for (std::size_t b = 0; b < differing.size(); ++b)
      if (mask >> b & 1U)
        for (std::size_t v : differing[b]) c[v] = c2[v];
    out.push_back(space.index(c));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline HeredityTensor heredity_from_measure(const CellMeasure& mu) {
  const CellSpace& space = mu.space();
  const std::size_t n = space.size();
  CubicArray p(n);
  for (std::size_t s1 = 0; s1 < n; ++s1)
    for (std::size_t s2 = s1; s2 < n; ++s2) {
      const auto omega = omega_set(space, s1, s2);
      double z = 0.0;
      for (std::size_t s : omega) z += mu[s];
      for (std::size_t s : omega) p.set_sym(s1, s2, s, mu[s] / z);
    }
  return HeredityTensor::make(std::move(p));
}

/// μ(σ) = ∏ μ_i(σ|Λ_i), one factor per component of g in component order,
/// each over the induced subgraph of its component.
inline CellMeasure product_measure(const GraphSpec& g, const std::vector<CellMeasure>& factors) {
  const auto comps = components(g);
  detail::require(factors.size() == comps.size(), ErrorKind::dimension_mismatch,
                  "product_measure: expected " + std::to_string(comps.size()) +
                      " factors, one per component");
  const auto& alleles = factors.front().space().alleles();
  for (std::size_t i = 0; i < comps.size(); ++i) {
    detail::require(factors[i].space().graph() == induced_subgraph(g, comps[i]),
                    ErrorKind::dimension_mismatch,
                    "product_measure: factor " + std::to_string(i + 1) +
                        " is not over its component subgraph");
    detail::require(factors[i].space().alleles() == alleles, ErrorKind::dimension_mismatch,
                    "product_measure: factors use different allele sets");
  }
  const CellSpace space = CellSpace::make(g, alleles);
  std::vector<double> w(space.size(), 1.0);
  for (std::size_t s = 0; s < space.size(); ++s) {
    const auto c = space.cell(s);
    for (std::size_t i = 0; i < comps.size(); ++i) {
      CellSpace::Cell local;
      for (std::size_t v : comps[i]) local.push_back(c[v]);
      w[s] *= factors[i][factors[i].space().index(local)];
    }
  }
  return CellMeasure::make(space, std::move(w));
}

/// Marginal of a distribution over Φ^Λ onto the cells of one component.
inline std::vector<double> marginal(const CellSpace& space, std::span<const double> x,
                                    const std::vector<std::size_t>& component,
                                    const CellSpace& factor_space) {
  std::vector<double> out(factor_space.size(), 0.0);
  for (std::size_t s = 0; s < space.size(); ++s) {
    const auto c = space.cell(s);
    CellSpace::Cell local;
    for (std::size_t v : component) local.push_back(c[v]);
    out[factor_space.index(local)] += x[s];
  }
  return out;
}

struct ReductionOptions {
  std::size_t n_trajectories = 10;
  std::size_t n_steps = 100;
  std::uint64_t seed = 0;
  double tol = 1e-10;
};

struct ReductionReport {
  bool ok = true;
  double worst_deviation = 0.0;
  std::size_t worst_step = 0;
  std::size_t worst_trajectory = 0;
  std::size_t worst_component = 0;
};

/// Runs the full operator of `mu` from product initial distributions and
/// compares each component marginal with the factor operator's trajectory.
inline ReductionReport verify_reduction(const CellMeasure& mu,
                                        const std::vector<CellMeasure>& factors,
                                        const ReductionOptions& opt = {}) {
  const CellSpace& space = mu.space();
  const auto comps = components(space.graph());
  detail::require(factors.size() == comps.size(), ErrorKind::dimension_mismatch,
                  "verify_reduction: one factor per component required");
  for (std::size_t i = 0; i < comps.size(); ++i) {
    detail::require(factors[i].space().graph() == induced_subgraph(space.graph(), comps[i]) &&
                        factors[i].space().alleles() == space.alleles(),
                    ErrorKind::dimension_mismatch,
                    "verify_reduction: factor " + std::to_string(i + 1) +
                        " does not match its component");
  }
  const HeredityTensor full = heredity_from_measure(mu);
  std::vector<HeredityTensor> parts;
  for (const auto& f : factors) parts.push_back(heredity_from_measure(f));

  ReductionReport rep;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t t = 0; t < opt.n_trajectories; ++t) {
    std::vector<SimplexPoint> ys;
    for (const auto& f : factors) ys.push_back(sample_uniform(f.space().size(), rng));
    std::vector<double> x0(space.size(), 1.0);
    for (std::size_t s = 0; s < space.size(); ++s) {
      const auto c = space.cell(s);
      for (std::size_t i = 0; i < comps.size(); ++i) {
        CellSpace::Cell local;
        for (std::size_t v : comps[i]) local.push_back(c[v]);
        x0[s] *= ys[i][factors[i].space().index(local)];
      }
    }
    SimplexPoint x = make_point(std::move(x0));
    for (std::size_t step = 0; step <= opt.n_steps; ++step) {
      for (std::size_t i = 0; i < comps.size(); ++i) {
        const auto marg = marginal(space, x.coords(), comps[i], factors[i].space());
        double dev = 0.0;
        for (std::size_t c = 0; c < marg.size(); ++c) dev = std::max(dev, std::abs(marg[c] - ys[i][c]));
        if (dev > rep.worst_deviation) {
          rep.worst_deviation = dev;
          rep.worst_step = step;
          rep.worst_trajectory = t;
          rep.worst_component = i;
        }
      }
      if (step == opt.n_steps) break;
      x = apply(full, x);
      for (std::size_t i = 0; i < comps.size(); ++i) ys[i] = apply(parts[i], ys[i]);
    }
  }
  rep.ok = rep.worst_deviation <= opt.tol;
  return rep;
}

}  // namespace qso
