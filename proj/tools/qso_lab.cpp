// qso_lab: batch driver for constructing, classifying and simulating
// quadratic stochastic operators.
//
// Exit status: 0 success, 2 unreadable or malformed input, 3 operator
// validation failure, 4 analysis failure. Failures print a JSON error object
// on stderr.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qso_lab/qso_lab.hpp"

namespace fs = std::filesystem;

namespace {

enum class Phase { load, build, analyze };

struct Options {
  std::string command;
  fs::path spec;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool strict_simplex = false;
};

class Outputs {
 public:
  explicit Outputs(std::optional<fs::path> dir) : dir_(std::move(dir)) {}

  /// Collects files; nothing touches disk until commit().
  void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

  void commit(const Options& opt, double wall_seconds) {
    if (!dir_) {
      for (const auto& [name, content] : files_)
        if (name.ends_with(".json")) std::cout << content;
      return;
    }
    qso::json outputs = qso::json::array();
    for (const auto& [name, content] : files_) {
      qso::write_file_atomic(*dir_ / name, content);
      outputs.push_back(name);
    }
    qso::json manifest = {{"tool", "qso_lab"},
                          {"version", qso::kVersion},
                          {"command", opt.command},
                          {"spec", opt.spec.string()},
                          {"seed", opt.seed ? qso::json(*opt.seed) : qso::json(nullptr)},
                          {"steps", opt.steps ? qso::json(*opt.steps) : qso::json(nullptr)},
                          {"strict_simplex", opt.strict_simplex},
                          {"wall_time_seconds", wall_seconds},
                          {"outputs", outputs}};
    qso::write_file_atomic(*dir_ / "manifest.json", qso::dump(manifest));
  }

 private:
  std::optional<fs::path> dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

int exit_code(Phase phase, const qso::Error& e) {
  if (e.kind() == qso::ErrorKind::parse) return 2;
  return phase == Phase::analyze ? 4 : 3;
}

int fail(int code, qso::ErrorKind kind, const std::string& msg) {
  std::cerr << qso::error_json(kind, code, msg).dump() << "\n";
  return code;
}

fs::path base_of(const fs::path& spec) { return spec.has_parent_path() ? spec.parent_path() : fs::path("."); }

// The experiment document, or an operator-only document wrapped as one.
qso::json as_experiment(const qso::json& doc, std::vector<std::string> default_analyses) {
  if (doc.is_object() && doc.contains("operator")) return doc;
  qso::json analyses = qso::json::array();
  for (auto& a : default_analyses) analyses.push_back({{"type", a}});
  return {{"operator", doc}, {"analyses", analyses}};
}

int run_command(const Options& opt) {
  Phase phase = Phase::load;
  const auto t0 = std::chrono::steady_clock::now();
  Outputs outputs(opt.out);
  const auto policy = opt.strict_simplex ? qso::Normalization::strict : qso::Normalization::renormalize;
  try {
    const qso::json doc = qso::read_json_file(opt.spec);
    const fs::path base = base_of(opt.spec);

    if (opt.command == "sweep") {
      const auto sweep = qso::parse_sweep(doc, base);
      phase = Phase::analyze;
      outputs.add("sweep.csv", qso::run_sweep(sweep, opt.seed, opt.steps, policy));
    } else if (opt.command == "family" || opt.command == "construct-gibbs") {
      std::optional<qso::GibbsSpec> gibbs;
      qso::json family_doc = doc;
      if (opt.command == "construct-gibbs") {
        gibbs = qso::gibbs_from_json(doc.contains("gibbs") ? doc.at("gibbs") : doc);
      } else {
        (void)qso::detail::field<std::string>(doc, "family", "family spec");
      }
      phase = Phase::build;
      const qso::Operator op = gibbs ? qso::operator_from_gibbs(*gibbs) : qso::operator_from_family(family_doc);
      phase = Phase::analyze;
      outputs.add("tensor.json", qso::dump(qso::to_json(op.tensor)));
      if (op.skew) outputs.add("skew.json", qso::dump(qso::to_json(*op.skew)));
      qso::json cls = qso::to_json(qso::classify(op.tensor, op.f_partition));
      if (op.gibbs) {
        const auto& space = op.gibbs->measure.space();
        std::vector<std::string> labels;
        for (std::size_t s = 0; s < space.size(); ++s) labels.push_back(space.label(s));
        cls["cells"] = labels;
        cls["n_components"] = qso::components(space.graph()).size();
      }
      outputs.add("classification.json", qso::dump(cls));
    } else {
      const auto exp = as_experiment(doc, opt.command == "classify"
                                              ? std::vector<std::string>{"classify"}
                                              : std::vector<std::string>{"classify", "fixed-points"});
      auto spec = qso::parse_experiment(exp, base);
      if (opt.command == "classify") {
        spec.analyses = {{"classify", qso::json{{"type", "classify"}}}};
      }
      if (opt.seed) spec.seed = *opt.seed;
      spec.steps_override = opt.steps;
      spec.x0_policy = policy;
      phase = Phase::build;
      const qso::Operator op = qso::build_operator(spec);
      phase = Phase::analyze;
      auto result = qso::run_experiment(spec, op);
      outputs.add("report.json", qso::dump(result.report));
      for (auto& [name, content] : result.csv_files) outputs.add(name, std::move(content));
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    outputs.commit(opt, wall);
    return 0;
  } catch (const qso::Error& e) {
    return fail(exit_code(phase, e), e.kind(), e.what());
  } catch (const qso::json::exception& e) {
    return fail(phase == Phase::load ? 2 : 4, qso::ErrorKind::parse, e.what());
  } catch (const std::exception& e) {
    const int code = phase == Phase::load ? 2 : phase == Phase::build ? 3 : 4;
    return fail(code, qso::ErrorKind::runtime, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadratic stochastic operator lab"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--spec", opt.spec, "input document (JSON)")->required();
    sub->add_option("--out", opt.out, "output directory; reports go to stdout when omitted");
    sub->add_option("--seed", opt.seed, "override the experiment seed");
    sub->add_option("--steps", opt.steps, "override the step count of every analysis");
    sub->add_flag("--strict-simplex", opt.strict_simplex,
                  "reject initial points that are not exactly on the simplex");
  };
  const std::vector<std::pair<const char*, const char*>> commands{
      {"classify", "classify an operator"},
      {"run", "run an experiment"},
      {"sweep", "run an experiment template over a parameter grid"},
      {"construct-gibbs", "build the tensor of a Gibbs spec"},
      {"family", "build the tensor of a family spec"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, qso::ErrorKind::parse, e.what());
  }
  opt.command = app.get_subcommands().front()->get_name();
  return run_command(opt);
}
