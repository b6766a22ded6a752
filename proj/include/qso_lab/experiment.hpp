#pragma once

// Experiment documents: an operator source plus a list of analyses, run in
// order with seeds drawn from one generator. Sweeps substitute grid values
// into a template experiment and collect scalar diagnostics per cell.
//
//   {"operator": {...}, "seed": 7,
//    "analyses": [{"type": "cesaro", "n": 1000000}, ...]}

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qso_lab/dynamics.hpp"
#include "qso_lab/error.hpp"
#include "qso_lab/io.hpp"
#include "qso_lab/volterra.hpp"

namespace qso {

inline const std::vector<std::string>& analysis_types() {
  static const std::vector<std::string> types{"classify", "fixed-points", "cycles",
                                              "simulate", "cesaro",       "historic",
                                              "itinerary", "lyapunov",    "reduction"};
  return types;
}

struct AnalysisSpec {
  std::string type;
  json params;
};

struct ExperimentSpec {
  json operator_source;
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  std::vector<AnalysisSpec> analyses;
  std::optional<std::size_t> steps_override;
  Normalization x0_policy = Normalization::renormalize;
};

inline ExperimentSpec parse_experiment(const json& j, std::filesystem::path base_dir = {}) {
  ExperimentSpec spec;
  spec.operator_source = detail::member(j, "operator", "experiment");
  spec.base_dir = std::move(base_dir);
  spec.seed = detail::field_or<std::uint64_t>(j, "seed", 0, "experiment");
  const json& list = detail::member(j, "analyses", "experiment");
  if (!list.is_array() || list.empty())
    throw Error(ErrorKind::parse, "experiment: 'analyses' must be a nonempty list");
  for (const auto& a : list) {
    AnalysisSpec as;
    as.type = detail::field<std::string>(a, "type", "analysis");
    const auto& types = analysis_types();
    if (std::find(types.begin(), types.end(), as.type) == types.end())
      throw Error(ErrorKind::parse, "analysis: unknown type '" + as.type + "'");
    as.params = a;
    spec.analyses.push_back(std::move(as));
  }
  return spec;
}

inline Operator build_operator(const ExperimentSpec& spec) {
  return operator_from_source(spec.operator_source, spec.base_dir);
}

struct ExperimentOutput {
  json report;
  /// (file name, contents) for bulk series.
  std::vector<std::pair<std::string, std::string>> csv_files;
};

namespace detail {

inline Schedule schedule_from_json(const json& p, const std::string& where) {
  if (!p.contains("schedule")) return Schedule::geometric();
  const json& s = p.at("schedule");
  if (s.is_string() && s.get<std::string>() == "geometric") return Schedule::geometric();
  if (s.is_object() && s.contains("stride")) return Schedule::every(field<std::size_t>(s, "stride", where));
  throw Error(ErrorKind::parse, where + ": schedule must be \"geometric\" or {\"stride\": k}");
}

inline Arithmetic arithmetic_from_json(const json& p, const std::string& where) {
  const auto a = field_or<std::string>(p, "arithmetic", "auto", where);
  if (a == "auto") return Arithmetic::automatic;
  if (a == "linear") return Arithmetic::linear;
  if (a == "log") return Arithmetic::log;
  throw Error(ErrorKind::parse, where + ": arithmetic must be auto, linear or log");
}

/// Tail window: an integer, or "log_half" for the steps at or beyond sqrt(n).
inline std::size_t tail_from_json(const json& p, std::size_t n, const std::string& where) {
  if (!p.contains("tail_window")) return 512;
  const json& t = p.at("tail_window");
  if (t.is_string() && t.get<std::string>() == "log_half") {
    const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    return n >= root ? n - root + 1 : 1;
  }
  if (t.is_number_unsigned()) return t.get<std::size_t>();
  throw Error(ErrorKind::parse, where + ": tail_window must be a count or \"log_half\"");
}

struct AnalysisContext {
  const ExperimentSpec& spec;
  const Operator& op;
  std::uint64_t seed;
  std::size_t index;
  ExperimentOutput& out;
};

inline std::size_t steps_of(const AnalysisContext& ctx, const json& p, const char* key,
                            std::size_t fallback) {
  if (ctx.spec.steps_override) return *ctx.spec.steps_override;
  return field_or<std::size_t>(p, key, fallback, ctx.spec.analyses[ctx.index].type);
}

inline SimplexPoint initial_point(const AnalysisContext& ctx, const json& p) {
  const std::size_t m = ctx.op.evaluator.dim();
  if (p.contains("x0")) {
    SimplexPoint x = point_from_json(p.at("x0"), ctx.spec.x0_policy);
    require_same_dim(m, x.dim(), "x0");
    return x;
  }
  std::mt19937_64 rng(ctx.seed);
  return sample_uniform(m, rng);
}

inline RootSearchOptions root_options(const AnalysisContext& ctx, const json& p, std::size_t starts) {
  RootSearchOptions opt;
  const std::string& where = ctx.spec.analyses[ctx.index].type;
  opt.n_starts = field_or<std::size_t>(p, "n_starts", starts, where);
  opt.tol = field_or<double>(p, "tol", opt.tol, where);
  opt.seed = ctx.seed;
  return opt;
}

inline std::string csv_name(const AnalysisContext& ctx, const std::string& what) {
  return what + "_" + std::to_string(ctx.index) + ".csv";
}

inline json run_classify(const AnalysisContext& ctx, const json& p) {
  std::optional<std::set<std::size_t>> partition = ctx.op.f_partition;
  if (p.contains("f_partition")) partition = field<std::set<std::size_t>>(p, "f_partition", "classify");
  json j = to_json(classify(ctx.op.tensor, partition));
  if (ctx.op.skew) j["transversal"] = is_transversal(*ctx.op.skew);
  if (ctx.op.ergodic_failure_predicted) j["ergodic_failure_predicted"] = *ctx.op.ergodic_failure_predicted;
  return j;
}

inline json run_fixed_points(const AnalysisContext& ctx, const json& p) {
  const auto rep = find_fixed_points(ctx.op.evaluator, root_options(ctx, p, 64));
  json j = to_json(rep);
  if (p.contains("track") && !rep.points.empty()) {
    const SimplexPoint t = point_from_json(p.at("track"));
    std::size_t best = 0;
    for (std::size_t i = 1; i < rep.points.size(); ++i)
      if (distance(rep.points[i].point, t) < distance(rep.points[best].point, t)) best = i;
    j["tracked"] = {{"index", best},
                    {"distance", distance(rep.points[best].point, t)},
                    {"stability", to_string(rep.points[best].stability)}};
  }
  return j;
}

inline json run_cycles(const AnalysisContext& ctx, const json& p) {
  const int max_period = field_or<int>(p, "max_period", 4, "cycles");
  json j;
  j["cycles"] = to_json(detect_cycles(ctx.op.evaluator, max_period, root_options(ctx, p, 32)));
  j["vertex_cycles"] = vertex_cycles(ctx.op.tensor);
  return j;
}

inline json run_simulate(const AnalysisContext& ctx, const json& p) {
  const std::size_t n = steps_of(ctx, p, "n", 1000);
  IterateOptions opt;
  opt.schedule = schedule_from_json(p, "simulate");
  opt.tail_window = tail_from_json(p, n, "simulate");
  opt.arithmetic = arithmetic_from_json(p, "simulate");
  const auto traj = iterate(ctx.op.evaluator, initial_point(ctx, p), n, opt);
  json j;
  j["x0"] = to_json(traj.x0);
  j["n"] = n;
  j["log_space"] = traj.used_log_space;
  j["final"] = to_json(traj.last());
  j["omega"] = to_json(omega_limit_estimate(traj, field_or<double>(p, "cluster_tol", 1e-3, "simulate")));
  if (traj.cesaro_checkpoints.size() / 2 + (traj.cesaro_checkpoints.size() % 2) >= 4)
    j["cesaro"] = to_json(cesaro_diagnostic(traj));
  if (p.contains("target")) j["rate"] = to_json(convergence_rate(traj, point_from_json(p.at("target"))));
  ctx.out.csv_files.emplace_back(csv_name(ctx, "trajectory"), trajectory_csv(traj.checkpoints));
  return j;
}

inline json run_cesaro(const AnalysisContext& ctx, const json& p) {
  const std::size_t n = steps_of(ctx, p, "n", 1000000);
  IterateOptions opt;
  opt.schedule = schedule_from_json(p, "cesaro");
  opt.tail_window = 1;
  opt.arithmetic = arithmetic_from_json(p, "cesaro");
  CesaroThresholds th;
  th.converging_below = field_or<double>(p, "converging_below", th.converging_below, "cesaro");
  th.oscillating_above = field_or<double>(p, "oscillating_above", th.oscillating_above, "cesaro");
  const auto traj = iterate(ctx.op.evaluator, initial_point(ctx, p), n, opt);
  json j = to_json(cesaro_diagnostic(traj, th));
  j["x0"] = to_json(traj.x0);
  j["n"] = n;
  if (ctx.op.ergodic_failure_predicted) j["ergodic_failure_predicted"] = *ctx.op.ergodic_failure_predicted;
  ctx.out.csv_files.emplace_back(csv_name(ctx, "cesaro"), trajectory_csv(traj.cesaro_checkpoints));
  return j;
}

inline json run_historic(const AnalysisContext& ctx, const json& p) {
  const std::size_t n = steps_of(ctx, p, "n", 100000);
  std::vector<Observable> fs;
  if (p.contains("linear")) {
    for (const auto& w : field<std::vector<std::vector<double>>>(p, "linear", "historic")) {
      require_same_dim(ctx.op.evaluator.dim(), w.size(), "historic observable");
      fs.push_back([w](const SimplexPoint& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
        return s;
      });
    }
  }
  const SimplexPoint x0 = initial_point(ctx, p);
  json j = to_json(historic_behavior_test(ctx.op.evaluator, x0, std::move(fs), n,
                                          schedule_from_json(p, "historic"),
                                          arithmetic_from_json(p, "historic")));
  j["x0"] = to_json(x0);
  return j;
}

inline json run_itinerary(const AnalysisContext& ctx, const json& p) {
  const std::size_t n = steps_of(ctx, p, "n", 10000);
  const double radius = field_or<double>(p, "radius", 1e-2, "itinerary");
  IterateOptions opt;
  opt.tail_window = 1;
  opt.arithmetic = arithmetic_from_json(p, "itinerary");
  const auto fixed = find_fixed_points(ctx.op.evaluator, root_options(ctx, p, 64));
  const auto traj = iterate(ctx.op.evaluator, initial_point(ctx, p), n, opt);
  json j = to_json(itinerary(traj, fixed, radius));
  j["fixed_points"] = to_json(fixed);
  j["x0"] = to_json(traj.x0);
  return j;
}

inline json run_lyapunov(const AnalysisContext& ctx, const json& p) {
  const std::size_t n = steps_of(ctx, p, "n", 1000);
  const json& f = member(p, "function", "lyapunov");
  const auto kind = field<std::string>(f, "kind", "lyapunov function");
  LyapunovSpec ls;
  if (kind == "product") {
    ls = LyapunovSpec::product(field<std::vector<double>>(f, "p", "lyapunov function"));
  } else if (kind == "partial_sum") {
    ls = LyapunovSpec::partial_sum(field<std::size_t>(f, "r", "lyapunov function"));
  } else if (kind == "ratio") {
    ls = LyapunovSpec::ratio(field<std::size_t>(f, "i", "lyapunov function"),
                             field<std::size_t>(f, "j", "lyapunov function"));
  } else {
    throw Error(ErrorKind::parse, "lyapunov function: kind must be product, partial_sum or ratio");
  }
  const SimplexPoint x0 = initial_point(ctx, p);
  const auto steps = Schedule::geometric().steps(n);
  std::size_t next_cp = 0;
  std::vector<std::pair<std::size_t, double>> values;
  bool nonincreasing = true;
  bool nondecreasing = true;
  double prev = 0.0;
  const double slack = field_or<double>(p, "slack", 1e-12, "lyapunov");
  walk(ctx.op.evaluator, x0, n, resolve_log_space(ctx.op.evaluator, arithmetic_from_json(p, "lyapunov")),
       [&](std::size_t step, const SimplexPoint& x) {
         const double v = lyapunov_value(ls, x);
         if (step > 0) {
           if (v > prev + slack * std::max(1.0, std::abs(prev))) nonincreasing = false;
           if (v < prev - slack * std::max(1.0, std::abs(prev))) nondecreasing = false;
         }
         prev = v;
         if (next_cp < steps.size() && steps[next_cp] == step) {
           values.emplace_back(step, v);
           ++next_cp;
         }
       });
  json vals = json::array();
  for (const auto& [s, v] : values) vals.push_back(json::array({s, finite_or_null(v)}));
  return {{"x0", to_json(x0)},
          {"n", n},
          {"values", std::move(vals)},
          {"nonincreasing", nonincreasing},
          {"nondecreasing", nondecreasing}};
}

inline json run_reduction(const AnalysisContext& ctx, const json& p) {
  if (!ctx.op.gibbs || !ctx.op.gibbs->factors)
    throw Error(ErrorKind::invalid_argument,
                "reduction: the operator must be a gibbs spec given by 'factors'");
  ReductionOptions opt;
  opt.n_trajectories = field_or<std::size_t>(p, "n_trajectories", opt.n_trajectories, "reduction");
  opt.n_steps = steps_of(ctx, p, "n_steps", opt.n_steps);
  opt.tol = field_or<double>(p, "tol", opt.tol, "reduction");
  opt.seed = ctx.seed;
  return to_json(verify_reduction(ctx.op.gibbs->measure, *ctx.op.gibbs->factors, opt));
}

}  // namespace detail

/// Runs every analysis in order. Analysis failures propagate as qso::Error.
inline ExperimentOutput run_experiment(const ExperimentSpec& spec, const Operator& op) {
  ExperimentOutput out;
  std::mt19937_64 master(spec.seed);
  json results = json::array();
  for (std::size_t i = 0; i < spec.analyses.size(); ++i) {
    const auto& a = spec.analyses[i];
    const detail::AnalysisContext ctx{spec, op, master(), i, out};
    json r;
    if (a.type == "classify") {
      r = detail::run_classify(ctx, a.params);
    } else if (a.type == "fixed-points") {
      r = detail::run_fixed_points(ctx, a.params);
    } else if (a.type == "cycles") {
      r = detail::run_cycles(ctx, a.params);
    } else if (a.type == "simulate") {
      r = detail::run_simulate(ctx, a.params);
    } else if (a.type == "cesaro") {
      r = detail::run_cesaro(ctx, a.params);
    } else if (a.type == "historic") {
      r = detail::run_historic(ctx, a.params);
    } else if (a.type == "itinerary") {
      r = detail::run_itinerary(ctx, a.params);
    } else if (a.type == "lyapunov") {
      r = detail::run_lyapunov(ctx, a.params);
    } else {
      r = detail::run_reduction(ctx, a.params);
    }
    results.push_back({{"type", a.type}, {"result", std::move(r)}});
  }
  out.report = {{"operator", {{"family", op.family}, {"m", op.tensor.dim()}}},
                {"seed", spec.seed},
                {"analyses", std::move(results)}};
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct GridAxis {
  std::string path;  // JSON pointer into the template
  std::vector<json> values;
};

struct SweepSpec {
  json experiment_template;
  std::filesystem::path base_dir;
  std::vector<GridAxis> grid;
};

inline SweepSpec parse_sweep(const json& j, std::filesystem::path base_dir = {}) {
  SweepSpec s;
  s.experiment_template = detail::member(j, "template", "sweep");
  s.base_dir = std::move(base_dir);
  const json& grid = detail::member(j, "grid", "sweep");
  if (!grid.is_array() || grid.empty())
    throw Error(ErrorKind::parse, "sweep: 'grid' must be a nonempty list of axes");
  for (const auto& axis : grid) {
    GridAxis a;
    a.path = detail::field<std::string>(axis, "path", "sweep axis");
    a.values = detail::field<std::vector<json>>(axis, "values", "sweep axis");
    if (a.values.empty()) throw Error(ErrorKind::parse, "sweep axis '" + a.path + "' has no values");
    try {
      (void)json::json_pointer(a.path);
    } catch (const json::exception&) {
      throw Error(ErrorKind::parse, "sweep axis: '" + a.path + "' is not a JSON pointer");
    }
    s.grid.push_back(std::move(a));
  }
  // Fail early on a malformed template.
  (void)parse_experiment(s.experiment_template, s.base_dir);
  return s;
}

/// Grid cells in row-major order, first axis slowest.
inline std::vector<std::vector<std::size_t>> grid_cells(const SweepSpec& s) {
  std::vector<std::vector<std::size_t>> cells{{}};
  for (const auto& axis : s.grid) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& c : cells)
      for (std::size_t v = 0; v < axis.values.size(); ++v) {
        auto d = c;
        d.push_back(v);
        next.push_back(std::move(d));
      }
    cells = std::move(next);
  }
  return cells;
}

inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{
      "oscillation",    "cesaro_verdict", "ergodic_failure_predicted", "boundary_proximity",
      "n_clusters",     "rate",           "r_squared",                 "n_fixed_points",
      "tracked_stability", "error"};
  return cols;
}

namespace detail {

inline std::string csv_field(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  if (v.is_number_float()) return format_double(v.get<double>());
  return v.dump();
}

/// First occurrence of each scalar diagnostic across the report's analyses.
inline std::vector<json> sweep_scalars(const json& report) {
  std::vector<json> row(sweep_columns().size(), nullptr);
  auto put = [&](const char* col, const json& v) {
    const auto& cols = sweep_columns();
    const auto idx = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), col) - cols.begin());
    if (row[idx].is_null()) row[idx] = v;
  };
  for (const auto& a : report.at("analyses")) {
    const json& r = a.at("result");
    const json* ces = nullptr;
    if (a.at("type") == "cesaro") ces = &r;
    if (r.contains("cesaro")) ces = &r.at("cesaro");
    if (ces) {
      put("oscillation", ces->at("oscillation"));
      put("cesaro_verdict", ces->at("verdict"));
    }
    if (r.contains("ergodic_failure_predicted")) put("ergodic_failure_predicted", r.at("ergodic_failure_predicted"));
    if (r.contains("omega")) {
      put("boundary_proximity", r.at("omega").at("boundary_proximity"));
      put("n_clusters", r.at("omega").at("n_clusters"));
    }
    if (r.contains("rate")) {
      put("rate", r.at("rate").at("rate"));
      put("r_squared", r.at("rate").at("r_squared"));
    }
    if (a.at("type") == "fixed-points") {
      put("n_fixed_points", r.at("count"));
      if (r.contains("tracked")) put("tracked_stability", r.at("tracked").at("stability"));
    }
  }
  return row;
}

}  // namespace detail

inline std::size_t thread_cap() {
  std::size_t n = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QSO_LAB_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = v;
  }
  return n;
}

/// Runs every grid cell (concurrently, up to `threads`) and returns the CSV
/// in grid order. A failing cell records its message in the error column.
inline std::string run_sweep(const SweepSpec& s, std::optional<std::uint64_t> seed_override = {},
                             std::optional<std::size_t> steps_override = {},
                             Normalization x0_policy = Normalization::renormalize,
                             std::size_t threads = thread_cap()) {
  const auto cells = grid_cells(s);
  std::vector<std::vector<json>> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      std::vector<json> row;
      try {
        json doc = s.experiment_template;
        for (std::size_t a = 0; a < s.grid.size(); ++a)
          doc[json::json_pointer(s.grid[a].path)] = s.grid[a].values[cells[c][a]];
        ExperimentSpec spec = parse_experiment(doc, s.base_dir);
        if (seed_override) spec.seed = *seed_override;
        spec.steps_override = steps_override;
        spec.x0_policy = x0_policy;
        row = detail::sweep_scalars(run_experiment(spec, build_operator(spec)).report);
      } catch (const std::exception& e) {
        row.assign(sweep_columns().size(), nullptr);
        row.back() = e.what();
      }
      rows[c] = std::move(row);
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, cells.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::string out;
  for (const auto& axis : s.grid) out += detail::csv_field(axis.path) + ",";
  for (std::size_t c = 0; c < sweep_columns().size(); ++c)
    out += sweep_columns()[c] + (c + 1 < sweep_columns().size() ? "," : "\n");
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t a = 0; a < s.grid.size(); ++a)
      out += detail::csv_field(s.grid[a].values[cells[c][a]]) + ",";
    for (std::size_t k = 0; k < rows[c].size(); ++k)
      out += detail::csv_field(rows[c][k]) + (k + 1 < rows[c].size() ? "," : "\n");
  }
  return out;
}

}  // namespace qso
