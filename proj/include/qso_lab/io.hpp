#pragma once

// JSON and CSV formats. All indices in documents are 0-based.
//   tensor:  {"m": 3, "entries": [[[...]]]}            entries[i][j][k]
//   skew:    {"m": 3, "upper": [[i, k, a_ik], ...]}
//   family:  {"family": "zakharevich", "params": {...}}
//   gibbs:   {"n_vertices": 2, "edges": [[0, 1]], "alleles": ["A", "B"],
//             "measure": {"A,A": 0.1, ...}}   or "factors": [{...}, ...]

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qso_lab/dynamics.hpp"
#include "qso_lab/error.hpp"
#include "qso_lab/evaluator.hpp"
#include "qso_lab/families.hpp"
#include "qso_lab/gibbs.hpp"
#include "qso_lab/simplex.hpp"
#include "qso_lab/tensor.hpp"
#include "qso_lab/volterra.hpp"

namespace qso {

using json = nlohmann::json;

namespace detail {

inline const json& member(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorKind::parse, where + ": missing field '" + key + "'");
  return j.at(key);
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  const json& v = member(j, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::parse, where + ": field '" + key + "' has the wrong type");
  }
}

template <class T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return field<T>(j, key, where);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Files

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// Writes through a temporary file in the same directory, then renames, so a
/// failed write leaves no partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::runtime, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error(ErrorKind::runtime, "write to '" + tmp.string() + "' failed");
    }
  }
  fs::rename(tmp, path);
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// 17 significant digits, enough to round-trip a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Points, tensors, skew matrices

inline json to_json(const SimplexPoint& x) { return json(x.vec()); }

inline SimplexPoint point_from_json(const json& j, Normalization policy = Normalization::renormalize) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::parse, "point: expected an array of numbers");
  }
  return SimplexPoint::make(std::move(v), policy);
}

inline json to_json(const HeredityTensor& p) {
  const std::size_t m = p.dim();
  json entries = json::array();
  for (std::size_t i = 0; i < m; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> ks(m);
      for (std::size_t k = 0; k < m; ++k) ks[k] = p(i, j, k);
      row.push_back(ks);
    }
    entries.push_back(std::move(row));
  }
  return {{"m", m}, {"entries", std::move(entries)}};
}

inline CubicArray cubic_from_json(const json& entries, std::size_t m, const std::string& where) {
  CubicArray p(m);
  auto bad = [&] { return Error(ErrorKind::parse, where + ": entries must be an m x m x m array"); };
  if (!entries.is_array() || entries.size() != m) throw bad();
  for (std::size_t i = 0; i < m; ++i) {
    if (!entries[i].is_array() || entries[i].size() != m) throw bad();
    for (std::size_t j = 0; j < m; ++j) {
      if (!entries[i][j].is_array() || entries[i][j].size() != m) throw bad();
      for (std::size_t k = 0; k < m; ++k) {
        if (!entries[i][j][k].is_number()) throw bad();
        p(i, j, k) = entries[i][j][k].get<double>();
      }
    }
  }
  return p;
}

/// Parses a tensor document. Structure errors are parse errors; invariant
/// violations surface from HeredityTensor::make as validation errors.
inline HeredityTensor tensor_from_json(const json& j, TensorPolicy policy = TensorPolicy::strict) {
  const auto m = detail::field<std::size_t>(j, "m", "tensor");
  if (m == 0) throw Error(ErrorKind::parse, "tensor: m must be positive");
  return HeredityTensor::make(cubic_from_json(detail::member(j, "entries", "tensor"), m, "tensor"),
                              policy);
}

inline json to_json(const SkewSymmetricMatrix& a) {
  json upper = json::array();
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t k = i + 1; k < a.dim(); ++k)
      if (a(i, k) != 0.0) upper.push_back(json::array({i, k, a(i, k)}));
  return {{"m", a.dim()}, {"upper", std::move(upper)}};
}

inline SkewSymmetricMatrix skew_from_json(const json& j) {
  const auto m = detail::field<std::size_t>(j, "m", "skew matrix");
  std::vector<std::tuple<std::size_t, std::size_t, double>> upper;
  for (const auto& e : detail::member(j, "upper", "skew matrix")) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number_unsigned() ||
        !e[1].is_number_unsigned() || !e[2].is_number())
      throw Error(ErrorKind::parse, "skew matrix: each upper entry must be [i, k, value]");
    upper.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>(), e[2].get<double>());
  }
  return SkewSymmetricMatrix::from_upper(m, upper);
}

// ---------------------------------------------------------------------------
// Gibbs specs

struct GibbsSpec {
  CellMeasure measure;
  /// Present when the measure was given as a product over components.
  std::optional<std::vector<CellMeasure>> factors;
};

namespace detail {

inline std::vector<double> cell_weights(const json& map, const CellSpace& space,
                                        const std::string& where) {
  if (!map.is_object()) throw Error(ErrorKind::parse, where + ": measure must be an object");
  const auto& alleles = space.alleles();
  const bool single_char = std::all_of(alleles.begin(), alleles.end(),
                                       [](const std::string& a) { return a.size() == 1; });
  std::vector<double> w(space.size(), 0.0);
  std::vector<bool> seen(space.size(), false);
  for (const auto& [key, value] : map.items()) {
    std::vector<std::string> parts;
    if (key.find(',') != std::string::npos || !single_char || space.n_vertices() == 1) {
      std::stringstream ss(key);
      std::string part;
      while (std::getline(ss, part, ',')) parts.push_back(part);
      if (!key.empty() && key.back() == ',') parts.emplace_back();
    } else {
      for (char ch : key) parts.emplace_back(1, ch);
    }
    if (parts.size() != space.n_vertices())
      throw Error(ErrorKind::parse, where + ": key '" + key + "' does not name a cell");
    CellSpace::Cell c;
    for (const auto& part : parts) {
      const auto it = std::find(alleles.begin(), alleles.end(), part);
      if (it == alleles.end())
        throw Error(ErrorKind::parse, where + ": unknown allele '" + part + "' in key '" + key + "'");
      c.push_back(static_cast<std::size_t>(it - alleles.begin()));
    }
    const std::size_t idx = space.index(c);
    if (seen[idx]) throw Error(ErrorKind::parse, where + ": cell '" + key + "' given twice");
    if (!value.is_number()) throw Error(ErrorKind::parse, where + ": weight of '" + key + "' is not a number");
    seen[idx] = true;
    w[idx] = value.get<double>();
  }
  for (std::size_t i = 0; i < space.size(); ++i)
    if (!seen[i]) throw Error(ErrorKind::parse, where + ": no weight for cell " + space.label(i));
  return w;
}

}  // namespace detail

inline GibbsSpec gibbs_from_json(const json& j) {
  const std::string where = "gibbs spec";
  const auto n = detail::field<std::size_t>(j, "n_vertices", where);
  const auto edges = detail::field_or<std::vector<std::pair<std::size_t, std::size_t>>>(
      j, "edges", {}, where);
  const auto alleles = detail::field<std::vector<std::string>>(j, "alleles", where);
  const GraphSpec graph = GraphSpec::make(n, edges);
  const CellSpace space = CellSpace::make(graph, alleles);

  const bool has_measure = j.contains("measure");
  const bool has_factors = j.contains("factors");
  if (has_measure == has_factors)
    throw Error(ErrorKind::parse, where + ": give exactly one of 'measure' or 'factors'");
  if (has_measure) {
    return {CellMeasure::make(space, detail::cell_weights(j.at("measure"), space, where)), std::nullopt};
  }
  const auto comps = components(graph);
  const json& fj = j.at("factors");
  if (!fj.is_array() || fj.size() != comps.size())
    throw Error(ErrorKind::parse, where + ": 'factors' needs one measure per component (" +
                                      std::to_string(comps.size()) + ")");
  std::vector<CellMeasure> factors;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const CellSpace local = CellSpace::make(induced_subgraph(graph, comps[i]), alleles);
    factors.push_back(CellMeasure::make(
        local, detail::cell_weights(fj[i], local, where + " factor " + std::to_string(i + 1))));
  }
  return {product_measure(graph, factors), std::move(factors)};
}

inline json to_json(const CellMeasure& mu) {
  const auto& space = mu.space();
  json edges = json::array();
  for (const auto& [u, v] : space.graph().edges()) edges.push_back(json::array({u, v}));
  json measure = json::object();
  for (std::size_t s = 0; s < space.size(); ++s) measure[space.label(s)] = mu[s];
  return {{"n_vertices", space.n_vertices()},
          {"edges", std::move(edges)},
          {"alleles", space.alleles()},
          {"measure", std::move(measure)}};
}

// ---------------------------------------------------------------------------
// Operators from family specs

/// A constructed operator with whatever structure its family exposes.
struct Operator {
  std::string family;
  HeredityTensor tensor;
  Evaluator evaluator;
  std::optional<SkewSymmetricMatrix> skew;
  std::optional<std::set<std::size_t>> f_partition;
  std::optional<bool> ergodic_failure_predicted;
  std::optional<GibbsSpec> gibbs;
};

inline Operator operator_from_tensor(HeredityTensor p, std::string family = "tensor") {
  Evaluator ev = make_evaluator(p, family);
  return {std::move(family), std::move(p), std::move(ev), std::nullopt, std::nullopt, std::nullopt,
          std::nullopt};
}

inline Operator operator_from_skew(const SkewSymmetricMatrix& a, std::string family = "volterra") {
  Operator op = operator_from_tensor(to_tensor(a), family);
  op.evaluator = make_evaluator(a, family);
  op.skew = a;
  return op;
}

inline Operator operator_from_gibbs(GibbsSpec spec) {
  Operator op = operator_from_tensor(heredity_from_measure(spec.measure), "gibbs");
  op.gibbs = std::move(spec);
  return op;
}

namespace detail {

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
  std::vector<std::vector<double>> rows;
  try {
    rows = j.get<std::vector<std::vector<double>>>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::parse, where + ": expected a matrix (array of rows)");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != n)
      throw Error(ErrorKind::parse, where + ": matrix must be square");
    for (Eigen::Index c = 0; c < n; ++c) out(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace detail

/// Builds the operator named by {"family": ..., "params": {...}}.
inline Operator operator_from_family(const json& spec) {
  const auto family = detail::field<std::string>(spec, "family", "family spec");
  const json params = spec.contains("params") ? spec.at("params") : json::object();
  const std::string where = family + " params";
  auto num = [&](const char* key) { return detail::field<double>(params, key, where); };

  if (family == "zakharevich") {
    const auto z = zakharevich_family(num("a"), num("b"), num("c"));
    Operator op = operator_from_skew(z.matrix, family);
    op.ergodic_failure_predicted = z.ergodic_failure_predicted;
    return op;
  }
  if (family == "three_state") {
    const auto variant = detail::field_or<std::string>(params, "variant", "v0", where);
    ThreeState which;
    if (variant == "v0") {
      which = ThreeState::v0;
    } else if (variant == "v1") {
      which = ThreeState::v1;
    } else if (variant == "mix") {
      which = ThreeState::mix;
    } else {
      throw Error(ErrorKind::parse, where + ": variant must be v0, v1 or mix");
    }
    const double lambda = detail::field_or<double>(params, "lambda", 1.0, where);
    return operator_from_tensor(build_three_state(which, lambda), family);
  }
  if (family == "f_qso") {
    const auto m = detail::field<std::size_t>(params, "m", where);
    const auto females = detail::field<std::set<std::size_t>>(params, "females", where);
    FertilityTable table;
    const json& fert = detail::member(params, "fertility", where);
    if (fert.is_string()) {
      if (fert.get<std::string>() != "uniform")
        throw Error(ErrorKind::parse, where + ": fertility must be \"uniform\" or a list of rows");
      for (std::size_t f : females)
        for (std::size_t male = 1; male <= m; ++male)
          if (!females.count(male)) table[{f, male}] = std::vector<double>(m + 1, 1.0 / static_cast<double>(m + 1));
    } else {
      if (!fert.is_array()) throw Error(ErrorKind::parse, where + ": fertility must be a list");
      for (const auto& row : fert) {
        table[{detail::field<std::size_t>(row, "female", where),
               detail::field<std::size_t>(row, "male", where)}] =
            detail::field<std::vector<double>>(row, "row", where);
      }
    }
    Operator op = operator_from_tensor(build_f_qso(m, females, table), family);
    op.f_partition = females;
    return op;
  }
  if (family == "strictly_nv_s2") {
    return operator_from_tensor(
        build_strictly_nv_s2(num("a"), num("b"), num("c"), num("d"), num("alpha"), num("beta")),
        family);
  }
  if (family == "separable") {
    return operator_from_tensor(
        build_separable(detail::matrix_from_json(detail::member(params, "a", where), where),
                        detail::matrix_from_json(detail::member(params, "b", where), where)),
        family);
  }
  if (family == "xi_qso" || family == "ell_volterra") {
    const json& entries = detail::member(params, "entries", where);
    const std::size_t m = entries.is_array() ? entries.size() : 0;
    if (m == 0) throw Error(ErrorKind::parse, where + ": entries must be a nonempty array");
    CubicArray cube = cubic_from_json(entries, m, where);
    if (family == "xi_qso") {
      return operator_from_tensor(
          build_xi_qso(detail::field<IndexPartition>(params, "partition", where), std::move(cube)),
          family);
    }
    return operator_from_tensor(
        build_ell_volterra(std::move(cube), detail::field<std::size_t>(params, "ell", where)), family);
  }
  if (family == "volterra") return operator_from_skew(skew_from_json(params), family);
  if (family == "permuted_volterra") {
    const SkewSymmetricMatrix a = skew_from_json(params);
    const Permutation tau(detail::field<std::vector<std::size_t>>(params, "permutation", where));
    Operator op = operator_from_tensor(permuted_tensor(a, tau), family);
    op.evaluator = permuted_operator(a, tau, family);
    return op;
  }
  if (family == "gibbs") return operator_from_gibbs(gibbs_from_json(params));
  throw Error(ErrorKind::parse, "unknown family '" + family + "'");
}

/// Operator source: {"family": ...}, {"tensor": {...} | "file.json"},
/// {"skew": {...}} or {"gibbs": {...}}. Relative paths resolve against base.
inline Operator operator_from_source(const json& src, const std::filesystem::path& base = {},
                                     TensorPolicy policy = TensorPolicy::strict) {
  if (!src.is_object()) throw Error(ErrorKind::parse, "operator: expected an object");
  if (src.contains("family")) return operator_from_family(src);
  if (src.contains("tensor")) {
    const json& t = src.at("tensor");
    if (t.is_string()) {
      std::filesystem::path path = t.get<std::string>();
      if (path.is_relative()) path = base / path;
      return operator_from_tensor(tensor_from_json(read_json_file(path), policy));
    }
    return operator_from_tensor(tensor_from_json(t, policy));
  }
  if (src.contains("skew")) return operator_from_skew(skew_from_json(src.at("skew")));
  if (src.contains("gibbs")) return operator_from_gibbs(gibbs_from_json(src.at("gibbs")));
  if (src.contains("entries")) return operator_from_tensor(tensor_from_json(src, policy));
  throw Error(ErrorKind::parse, "operator: need one of family, tensor, skew or gibbs");
}

// ---------------------------------------------------------------------------
// Reports

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const ClassificationReport& r) {
  json j;
  j["is_volterra"] = r.is_volterra;
  j["ell"] = r.ell ? json(*r.ell) : json(nullptr);
  j["is_strictly_non_volterra"] = r.is_strictly_non_volterra;
  j["f_qso_partition"] = r.f_qso_partition ? json(*r.f_qso_partition) : json(nullptr);
  j["bistochastic_necessary_ok"] = r.bistochastic_necessary_ok;
  j["bistochastic_sufficient_ok"] =
      r.bistochastic_sufficient_ok ? json(*r.bistochastic_sufficient_ok) : json(nullptr);
  j["regularity_margin"] = r.regularity_margin;
  j["regular"] = r.regularity_margin > 0.0;
  j["separable"] = r.separable_witness.has_value();
  j["extreme_candidate"] = r.extreme_candidate;
  return j;
}

inline json to_json(const FixedPoint& fp) {
  return {{"point", to_json(fp.point)},
          {"residual", fp.residual},
          {"stability", to_string(fp.stability)},
          {"spectrum", fp.spectrum}};
}

inline json to_json(const FixedPointReport& r) {
  json pts = json::array();
  for (const auto& fp : r.points) pts.push_back(to_json(fp));
  return {{"any_converged", r.any_converged}, {"count", r.points.size()}, {"points", std::move(pts)}};
}

inline json to_json(const std::vector<Cycle>& cycles) {
  json out = json::array();
  for (const auto& c : cycles) {
    json pts = json::array();
    for (const auto& p : c.points) pts.push_back(to_json(p));
    out.push_back({{"period", c.period}, {"points", std::move(pts)}});
  }
  return out;
}

inline json to_json(const CesaroDiagnostic& d) {
  return {{"oscillation", d.oscillation},
          {"oscillation_per_coordinate", d.oscillation_per_coordinate},
          {"verdict", to_string(d.verdict)},
          {"window_begin_step", d.window_begin_step},
          {"n_checkpoints", d.n_checkpoints}};
}

inline json to_json(const OmegaLimitEstimate& e) {
  json clusters = json::array();
  for (const auto& c : e.clusters)
    clusters.push_back({{"centroid", to_json(c.centroid)}, {"diameter", c.diameter}, {"visits", c.visits}});
  return {{"clusters", std::move(clusters)},
          {"n_clusters", e.clusters.size()},
          {"boundary_proximity", e.boundary_proximity},
          {"converged", e.converged}};
}

inline json to_json(const RateFit& f) {
  return {{"rate", f.rate},
          {"r_squared", finite_or_null(f.r_squared)},
          {"n_points", f.n_points},
          {"saturated", f.saturated}};
}

inline json to_json(const ItineraryReport& r) {
  return {{"labels", r.labels},
          {"occupancy_fraction", r.occupancy_fraction},
          {"radius", r.radius},
          {"steps_inside", r.steps_inside}};
}

inline json to_json(const HistoricReport& r) {
  return {{"steps", r.steps}, {"means", r.means}, {"diagnostic", to_json(r.diagnostic)}};
}

inline json to_json(const ReductionReport& r) {
  return {{"ok", r.ok},
          {"worst_deviation", r.worst_deviation},
          {"worst_step", r.worst_step},
          {"worst_trajectory", r.worst_trajectory},
          {"worst_component", r.worst_component}};
}

inline json error_json(ErrorKind kind, int exit_code, const std::string& message) {
  return {{"error", {{"kind", to_string(kind)}, {"exit_code", exit_code}, {"message", message}}}};
}

// ---------------------------------------------------------------------------
// CSV

/// Checkpoint rows "step,x1,...,xm".
inline std::string trajectory_csv(const std::vector<Checkpoint>& rows) {
  std::string out = "step";
  const std::size_t m = rows.empty() ? 0 : rows.front().point.dim();
  for (std::size_t i = 1; i <= m; ++i) out += ",x" + std::to_string(i);
  out += '\n';
  for (const auto& cp : rows) {
    out += std::to_string(cp.step);
    for (double v : cp.point) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

}  // namespace qso
