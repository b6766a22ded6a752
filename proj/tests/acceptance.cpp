// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "qso_lab/qso_lab.hpp"
#include "support.hpp"

using namespace qso;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Sum of the raw image stays on the simplex for random operators.
Outcome simplex_preservation() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> dim(2, 10);
  double worst_sum = 0.0;
  double worst_neg = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t m = dim(rng);
    const auto p = qso::testing::random_tensor(m, rng);
    const auto x = sample_uniform(m, rng);
    const auto y = apply_raw(p, x.coords());
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(y.begin(), y.end(), 0.0) - 1.0));
    for (double c : y) worst_neg = std::min(worst_neg, c);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_sum <= 1e-12 && worst_neg >= 0.0 && secs < 10.0;
  o.detail = "max |sum-1| " + fmt("%.3g", worst_sum) + ", min coordinate " + fmt("%.3g", worst_neg) +
             ", " + fmt("%.2f", secs) + " s";
  return o;
}

Outcome volterra_round_trip() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> dim(2, 8);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::size_t inexact = 0;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = dim(rng);
    std::vector<std::tuple<std::size_t, std::size_t, double>> upper;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = i + 1; k < m; ++k) upper.emplace_back(i, k, coef(rng));
    const auto a = SkewSymmetricMatrix::from_upper(m, upper);
    const auto p = to_tensor(a);
    const auto back = from_tensor(p);
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i < m; ++i)
        if (back(k, i) != a(k, i)) ++inexact;
    for (int s = 0; s < 10; ++s) {
      const auto x = sample_uniform(m, rng);
      worst = std::max(worst, distance(apply_canonical(a, x), apply(p, x)));
    }
  }
  return {inexact == 0 && worst <= 1e-12,
          std::to_string(inexact) + " inexact entries, max apply gap " + fmt("%.3g", worst)};
}

Outcome zakharevich_non_ergodic() {
  const auto t0 = Clock::now();
  const auto z = zakharevich_family(1, 1, 1);
  const auto traj = iterate(make_evaluator(z.matrix), make_point({0.3, 0.3, 0.4}), 1000000);
  const auto d = cesaro_diagnostic(traj);
  const auto omega = omega_limit_estimate(traj, 1e-3);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = d.verdict == CesaroVerdict::oscillating && d.oscillation > 0.95 &&
           omega.boundary_proximity < 1e-4 && secs < 30.0;
  o.detail = std::string("verdict ") + to_string(d.verdict) + ", oscillation " + fmt("%.10g", d.oscillation) +
             ", boundary proximity " + fmt("%.3g", omega.boundary_proximity) + ", " + fmt("%.2f", secs) + " s";
  return o;
}

HeredityTensor random_f_qso(std::size_t m, std::mt19937_64& rng) {
  std::set<std::size_t> females;
  std::bernoulli_distribution coin(0.5);
  while (females.empty() || females.size() == m) {
    females.clear();
    for (std::size_t i = 1; i <= m; ++i)
      if (coin(rng)) females.insert(i);
  }
  FertilityTable t;
  for (std::size_t f : females)
    for (std::size_t male = 1; male <= m; ++male)
      if (!females.count(male)) t[{f, male}] = sample_uniform(m + 1, rng).vec();
  return build_f_qso(m, females, t);
}

Outcome f_qso_convergence() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> dim(2, 4);
  std::size_t bad_fixed = 0;
  std::size_t slow = 0;
  std::size_t bad_fit = 0;
  double worst_rate = 0.0;
  double worst_r2 = 1.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = dim(rng);
    const auto p = random_f_qso(m, rng);
    const auto v = make_evaluator(p);
    const auto e0 = vertex(m + 1, 0);
    const auto fixed = find_fixed_points(v, {.n_starts = 32, .seed = static_cast<std::uint64_t>(t)});
    if (fixed.points.size() != 1 || distance(fixed.points[0].point, e0) > 1e-10) ++bad_fixed;
    for (int s = 0; s < 5; ++s) {
      const auto x0 = sample_uniform(m + 1, rng);
      const auto traj = iterate(v, x0, 10000);
      const bool reached = std::any_of(traj.checkpoints.begin(), traj.checkpoints.end(),
                                       [&](const Checkpoint& c) { return distance(c.point, e0) < 1e-8; });
      if (!reached) ++slow;
      const auto fit = convergence_rate(traj, e0);
      worst_rate = std::max(worst_rate, fit.rate);
      if (std::isfinite(fit.r_squared)) worst_r2 = std::min(worst_r2, fit.r_squared);
      if (!(fit.rate < 1.0 && (fit.r_squared > 0.95))) ++bad_fit;
    }
  }
  return {bad_fixed == 0 && slow == 0 && bad_fit == 0,
          std::to_string(bad_fixed) + " wrong fixed-point sets, " + std::to_string(slow) +
              " slow trajectories, " + std::to_string(bad_fit) + " fits failing; max rate " +
              fmt("%.3g", worst_rate) + ", min r^2 " + fmt("%.4f", worst_r2)};
}

Outcome regularity() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> dim(2, 4);
  std::size_t failures = 0;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = dim(rng);
    const double floor = 1.0 / (2.0 * static_cast<double>(m)) + 0.01 + 1e-6;
    const auto p = qso::testing::random_tensor_above(m, floor, rng);
    const auto v = make_evaluator(p);
    std::vector<SimplexPoint> ends;
    bool ok = true;
    for (int s = 0; s < 20; ++s) {
      const auto traj = iterate(v, sample_uniform(m, rng), 2000, {Schedule::geometric(), 1, Arithmetic::linear});
      const auto& x = traj.last();
      if (distance(v(x), x) > 1e-8) ok = false;
      ends.push_back(x);
    }
    for (const auto& e : ends) {
      const double d = distance(e, ends.front());
      worst = std::max(worst, d);
      if (d > 1e-8) ok = false;
    }
    if (!ok) ++failures;
  }
  return {failures == 0, std::to_string(failures) + " tensors without a common limit; max spread " + fmt("%.3g", worst)};
}

// Doubly stochastic S composed with convex mixtures of identity and uniform
// operators: x -> S (lambda x + (1 - lambda) uniform), which satisfies (c).
HeredityTensor random_condition_c_tensor(std::mt19937_64& rng) {
  const std::size_t m = 3;
  std::array<std::size_t, 3> perm{0, 1, 2};
  std::vector<std::array<std::size_t, 3>> perms;
  do perms.push_back(perm);
  while (std::next_permutation(perm.begin(), perm.end()));
  const auto w = sample_uniform(perms.size(), rng);
  std::vector<std::vector<double>> s(m, std::vector<double>(m, 0.0));
  for (std::size_t q = 0; q < perms.size(); ++q)
    for (std::size_t i = 0; i < m; ++i) s[perms[q][i]][i] += w[q];
  const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto id = identity_tensor(m);
  const auto un = uniform_tensor(m);
  CubicArray p(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        double v = 0.0;
        for (std::size_t l = 0; l < m; ++l) v += s[k][l] * (lambda * id(i, j, l) + (1.0 - lambda) * un(i, j, l));
        p(i, j, k) = v;
      }
  return HeredityTensor::make(std::move(p), TensorPolicy::repair);
}

Outcome bistochasticity() {
  std::mt19937_64 rng(505);
  std::size_t generated_bad = 0;
  std::size_t probe_failures = 0;
  for (int t = 0; t < 50; ++t) {
    const auto p = random_condition_c_tensor(rng);
    const auto bc = bistochastic_conditions(p);
    if (!bc.c_ok || !*bc.c_ok) {
      ++generated_bad;
      continue;
    }
    if (!majorization_probe(p, 1000, static_cast<std::uint64_t>(t)).holds) ++probe_failures;
  }
  std::size_t failing = 0;
  std::size_t counterexamples = 0;
  while (failing < 50) {
    const auto p = qso::testing::random_tensor(3, rng);
    const auto bc = bistochastic_conditions(p);
    if (bc.a_ok && bc.b_ok) continue;
    ++failing;
    if (!majorization_probe(p, 1000, failing).holds) ++counterexamples;
  }
  return {generated_bad == 0 && probe_failures == 0 && counterexamples == failing,
          "(c) side: " + std::to_string(probe_failures) + " probe failures; (a)/(b) side: " +
              std::to_string(counterexamples) + "/" + std::to_string(failing) + " counterexamples found"};
}

std::uint64_t canonical_mask(std::size_t n, std::uint64_t mask,
                             const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::uint64_t best = ~std::uint64_t{0};
  do {
    std::uint64_t img = 0;
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      if (!(mask >> b & 1U)) continue;
      auto u = perm[pairs[b].first];
      auto v = perm[pairs[b].second];
      if (u > v) std::swap(u, v);
      const auto it = std::find(pairs.begin(), pairs.end(), std::make_pair(u, v));
      img |= std::uint64_t{1} << (it - pairs.begin());
    }
    best = std::min(best, img);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Outcome gibbs_connectivity() {
  const std::size_t n = 4;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
  std::set<std::uint64_t> classes;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << pairs.size()); ++mask)
    classes.insert(canonical_mask(n, mask, pairs));
  std::mt19937_64 rng(707);
  std::size_t mismatches = 0;
  std::size_t connected = 0;
  for (std::uint64_t mask : classes) {
    std::vector<GraphSpec::Edge> edges;
    for (std::size_t b = 0; b < pairs.size(); ++b)
      if (mask >> b & 1U) edges.push_back(pairs[b]);
    const auto g = GraphSpec::make(n, edges);
    if (is_connected(g)) ++connected;
    const auto space = CellSpace::make(g, {"0", "1"});
    for (int r = 0; r < 3; ++r) {
      const auto p = heredity_from_measure(random_measure(space, rng));
      if (classify(p).is_volterra != is_connected(g)) ++mismatches;
    }
  }
  return {classes.size() == 11 && mismatches == 0,
          std::to_string(classes.size()) + " graph classes (" + std::to_string(connected) + " connected), " +
              std::to_string(mismatches) + " mismatches over " + std::to_string(3 * classes.size()) + " measures"};
}

// Random graph with exactly two components on 2..4 vertices.
GraphSpec random_two_component_graph(std::mt19937_64& rng) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
  while (true) {
    std::vector<GraphSpec::Edge> edges;
    std::bernoulli_distribution coin(0.5);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (coin(rng)) edges.emplace_back(u, v);
    auto g = GraphSpec::make(n, edges);
    if (components(g).size() == 2) return g;
  }
}

Outcome product_reduction() {
  std::mt19937_64 rng(808);
  std::size_t failures = 0;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto g = random_two_component_graph(rng);
    const std::vector<std::string> alleles = t % 2 == 0 ? std::vector<std::string>{"a", "b"}
                                                        : std::vector<std::string>{"a", "b", "c"};
    std::vector<CellMeasure> factors;
    for (const auto& c : components(g))
      factors.push_back(random_measure(CellSpace::make(induced_subgraph(g, c), alleles), rng));
    const auto rep = verify_reduction(product_measure(g, factors), factors,
                                      {.n_trajectories = 10, .n_steps = 100, .seed = static_cast<std::uint64_t>(t), .tol = 1e-10});
    worst = std::max(worst, rep.worst_deviation);
    if (!rep.ok) ++failures;
  }
  return {failures == 0, std::to_string(failures) + " failures, max marginal deviation " + fmt("%.3g", worst)};
}

Outcome strictly_non_volterra() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t wrong_count = 0;
  std::size_t attracting = 0;
  for (int t = 0; t < 50; ++t) {
    const double a = u(rng);
    const double c = u(rng);
    const double al = u(rng);
    const auto v = make_evaluator(build_strictly_nv_s2(a, 1 - a, c, 1 - c, al, 1 - al));
    const auto r = find_fixed_points(v, {.n_starts = 64, .seed = static_cast<std::uint64_t>(t)});
    if (r.points.size() != 1) ++wrong_count;
    for (const auto& fp : r.points)
      if (fp.stability == Stability::attracting) ++attracting;
  }
  const auto v = make_evaluator(build_strictly_nv_s2(1, 0, 1, 0, 1, 0));
  bool two_cycle = false;
  for (const auto& c : detect_cycles(v, 4))
    if (c.period == 2 && detail::near_any(c.points, vertex(3, 0), 1e-10) &&
        detail::near_any(c.points, vertex(3, 1), 1e-10))
      two_cycle = true;
  return {wrong_count == 0 && attracting == 0 && two_cycle,
          std::to_string(wrong_count) + " draws without a unique fixed point, " + std::to_string(attracting) +
              " attracting; vertex 2-cycle " + (two_cycle ? "found" : "missing")};
}

Outcome stability_flip() {
  const auto r0 = find_fixed_points(make_evaluator(build_three_state(ThreeState::v0)));
  const auto r1 = find_fixed_points(make_evaluator(build_three_state(ThreeState::v1)));
  auto stability_at = [](const FixedPointReport& r, const SimplexPoint& x) -> std::optional<Stability> {
    for (const auto& fp : r.points)
      if (distance(fp.point, x) <= 1e-8) return fp.stability;
    return std::nullopt;
  };
  const auto b = barycenter(3);
  const auto s0 = stability_at(r0, b);
  const auto s1 = stability_at(r1, b);
  bool vertices_found = true;
  for (std::size_t i = 0; i < 3; ++i)
    vertices_found = vertices_found && stability_at(r0, vertex(3, i)) && stability_at(r1, vertex(3, i));
  return {s0 == Stability::repelling && s1 == Stability::attracting && vertices_found,
          std::string("M0 ") + (s0 ? to_string(*s0) : "missing") + " for V0, " + (s1 ? to_string(*s1) : "missing") +
              " for V1; vertices " + (vertices_found ? "present" : "missing")};
}

Outcome v0_non_convergence() {
  const auto t0 = Clock::now();
  const auto v = make_evaluator(build_three_state(ThreeState::v0));
  const std::size_t n = 1000000;
  const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::mt19937_64 rng(1111);
  std::size_t min_clusters = std::numeric_limits<std::size_t>::max();
  int starts = 0;
  while (starts < 10) {
    const auto x0 = sample_uniform(3, rng);
    if (distance(x0, barycenter(3)) < 1e-3) continue;
    ++starts;
    const auto traj = iterate(v, x0, n, {Schedule::geometric(), n - root + 1, Arithmetic::automatic});
    min_clusters = std::min(min_clusters, omega_limit_estimate(traj, 1e-3).clusters.size());
  }
  return {min_clusters >= 2, "min clusters over 10 starts " + std::to_string(min_clusters) + ", " +
                                 fmt("%.2f", seconds_since(t0)) + " s"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"simplex preservation", simplex_preservation},
      {"volterra round trip", volterra_round_trip},
      {"zakharevich non-ergodicity", zakharevich_non_ergodic},
      {"f-qso convergence", f_qso_convergence},
      {"regularity", regularity},
      {"bistochasticity", bistochasticity},
      {"gibbs connectivity", gibbs_connectivity},
      {"product-measure reduction", product_reduction},
      {"strictly non-volterra", strictly_non_volterra},
      {"stability flip", stability_flip},
      {"v0 non-convergence", v0_non_convergence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
