#pragma once

// Command-line front end: `train`, `bench` and `compare`.
//
// Exit codes: 0 success, 1 configuration / I/O error, 2 train stopped at the
// iteration limit, 3 compare found solvers disagreeing beyond the gate.

#include "piano/baselines.hpp"
#include "piano/core.hpp"
#include "piano/data_io.hpp"
#include "piano/piano_solver.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace piano::cli {

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Thrown by parse_command for --help; carries the rendered help text.
struct HelpRequested {
  std::string text;
};

enum class Subcommand { train, bench, compare };
enum class SolverKind { piano, irls, bohning, coord_l1 };

inline std::string to_string(SolverKind s) {
  switch (s) {
    case SolverKind::piano: return "piano";
    case SolverKind::irls: return "irls";
    case SolverKind::bohning: return "bohning";
    case SolverKind::coord_l1: return "coord-l1";
  }
  return "?";
}

inline SolverKind parse_solver(const std::string& s) {
  if (s == "piano") return SolverKind::piano;
  if (s == "irls") return SolverKind::irls;
  if (s == "bohning") return SolverKind::bohning;
  if (s == "coord-l1") return SolverKind::coord_l1;
  throw UsageError("unknown solver '" + s + "' (piano|irls|bohning|coord-l1)");
}

struct DataSource {
  std::optional<std::string> path;
  std::string format = "csv";  // csv | libsvm
  int label_column = -1;
  bool has_header = false;
  std::optional<SyntheticSpec> synth;
  bool append_bias = false;
};

struct CliCommand {
  Subcommand subcommand = Subcommand::train;
  DataSource source;
  std::vector<SolverKind> solvers;
  FitConfig config;
  std::optional<std::string> trace_path;
  std::optional<std::string> out_path;
  double target_frac = 0.6;
  double gate = 1e-3;
  std::vector<Index> sweep_d;
  bool zero_init = false;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) parts.push_back(cur);
  return parts;
}

inline long long parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("--synth: '" + key + "' needs an integer, got '" + value + "'");
  }
}

/// "n=500,d=50,m=30[,labels=model|uniform][,bias=0|1]"
inline SyntheticSpec parse_synth(const std::string& text) {
  SyntheticSpec spec;
  bool has_n = false, has_d = false, has_m = false;
  for (const auto& item : split(text, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--synth: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "n") {
      spec.n = parse_count(key, value);
      has_n = true;
    } else if (key == "d") {
      spec.d = parse_count(key, value);
      has_d = true;
    } else if (key == "m") {
      spec.m = parse_count(key, value);
      has_m = true;
    } else if (key == "labels") {
      if (value == "model") {
        spec.label_mode = LabelMode::ground_truth_model;
      } else if (value == "uniform") {
        spec.label_mode = LabelMode::uniform_random;
      } else {
        throw UsageError("--synth: labels must be model or uniform");
      }
    } else if (key == "bias") {
      spec.append_bias = parse_count(key, value) != 0;
    } else {
      throw UsageError("--synth: unknown key '" + key + "'");
    }
  }
  if (!has_n || !has_d || !has_m) throw UsageError("--synth needs n, d and m");
  if (spec.n < 1 || spec.d < 1 || spec.m < 2) throw UsageError("--synth needs n, d >= 1 and m >= 2");
  return spec;
}

inline int default_threads() {
  if (const char* env = std::getenv("PIANO_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t >= 1) return t;
    } catch (const std::exception&) {
    }
    throw UsageError("PIANO_THREADS must be a positive integer");
  }
  return 1;
}

inline TraceFormat trace_format_for(const std::string& path) {
  return std::filesystem::path(path).extension() == ".json" ? TraceFormat::json : TraceFormat::csv;
}

inline void require_parent_dir(const std::string& path, const char* flag) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw UsageError(std::string(flag) + ": directory does not exist: " + parent.string());
}

}  // namespace detail

/// Parses argv (argv[0] is the program name). Throws UsageError on any
/// invalid combination and HelpRequested for --help.
inline CliCommand parse_command(int argc, const char* const* argv) {
  CLI::App app{"Element-parallel MM solvers for multinomial logistic regression"};
  app.require_subcommand(1);

  struct Raw {
    std::string data, format = "csv", synth, solver, reg = "none", trace, out, sweep, l0_rank = "value",
                init = "uniform";
    int label_col = -1;
    bool header = false, bias = false;
    double lambda = 0.0, tol = -1.0, target = 0.6, gate = 1e-3;
    long long beta = -1, max_iter = -1, threads = -1;
    unsigned long long seed = 0;
  } raw;

  auto add_common = [&raw](CLI::App* sub) {
    sub->add_option("--data", raw.data, "Dataset file");
    sub->add_option("--format", raw.format, "csv|libsvm")->check(CLI::IsMember({"csv", "libsvm"}));
    sub->add_option("--label-col", raw.label_col, "CSV label column (negative counts from the end)");
    sub->add_flag("--header", raw.header, "CSV has a header row");
    sub->add_flag("--bias", raw.bias, "Append a constant-one feature");
    sub->add_option("--synth", raw.synth, "Synthetic data: n=..,d=..,m=..[,labels=model|uniform]");
    sub->add_option("--solver", raw.solver, "piano|irls|bohning|coord-l1 (comma list for bench/compare)");
    sub->add_option("--reg", raw.reg, "none|l1|l0")->check(CLI::IsMember({"none", "l1", "l0"}));
    sub->add_option("--lambda", raw.lambda, "l1 weight");
    sub->add_option("--beta", raw.beta, "l0 budget");
    sub->add_option("--l0-rank", raw.l0_rank, "value|gain")->check(CLI::IsMember({"value", "gain"}));
    sub->add_option("--tol", raw.tol, "Relative objective change stopping tolerance");
    sub->add_option("--max-iter", raw.max_iter, "Outer iteration limit");
    sub->add_option("--threads", raw.threads, "Worker threads (falls back to PIANO_THREADS)");
    sub->add_option("--seed", raw.seed, "Seed for synthetic data and initial weights");
    sub->add_option("--init", raw.init, "uniform|zero")->check(CLI::IsMember({"uniform", "zero"}));
    sub->add_option("--trace", raw.trace, "Trace output (.csv or .json)");
    sub->add_option("--out", raw.out, "Weights JSON (train) or CSV table (bench)");
  };
  auto* train = app.add_subcommand("train", "Fit one model");
  auto* bench = app.add_subcommand("bench", "Time-to-target sweep over problem sizes");
  auto* compare = app.add_subcommand("compare", "Cross-check converged objectives across solvers");
  for (auto* sub : {train, bench, compare}) add_common(sub);
  bench->add_option("--target-frac", raw.target, "Target as a fraction of the initial objective");
  bench->add_option("--sweep-d", raw.sweep, "Comma list of feature dimensions");
  compare->add_option("--gate", raw.gate, "Largest allowed pairwise relative objective delta");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* shown = &app;
    for (const auto* sub : {train, bench, compare})
      if (sub->parsed()) shown = sub;
    throw HelpRequested{shown->help()};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  CliCommand cmd;
  cmd.subcommand = train->parsed() ? Subcommand::train
                   : bench->parsed() ? Subcommand::bench
                                     : Subcommand::compare;

  const bool has_file = !raw.data.empty();
  const bool has_synth = !raw.synth.empty();
  if (has_file == has_synth) throw UsageError("give exactly one of --data or --synth");
  if (has_file) {
    cmd.source.path = raw.data;
    cmd.source.format = raw.format;
    cmd.source.label_column = raw.label_col;
    cmd.source.has_header = raw.header;
    if (!std::filesystem::exists(raw.data)) throw UsageError("--data: no such file: " + raw.data);
  } else {
    auto spec = detail::parse_synth(raw.synth);
    spec.seed = raw.seed;
    cmd.source.synth = spec;
  }
  cmd.source.append_bias = raw.bias;

  FitConfig& cfg = cmd.config;
  if (raw.reg == "l1") {
    cfg.reg = Regularization::l1;
    if (!(raw.lambda > 0.0)) throw UsageError("--reg l1 needs --lambda > 0");
    cfg.lambda = raw.lambda;
  } else if (raw.reg == "l0") {
    cfg.reg = Regularization::l0;
    if (raw.beta < 0) throw UsageError("--reg l0 needs --beta");
    cfg.beta = static_cast<std::size_t>(raw.beta);
  }
  cfg.l0_rank = raw.l0_rank == "gain" ? L0Rank::gain : L0Rank::value;
  const bool is_compare = cmd.subcommand == Subcommand::compare;
  cfg.rel_tol = raw.tol > 0.0 ? raw.tol : (is_compare ? 1e-10 : 1e-3);
  if (raw.tol == 0.0 || (raw.tol < 0.0 && raw.tol != -1.0)) throw UsageError("--tol must be positive");
  cfg.max_outer_iters = raw.max_iter > 0 ? static_cast<int>(raw.max_iter) : (is_compare ? 200000 : 1000);
  if (raw.max_iter == 0 || raw.max_iter < -1) throw UsageError("--max-iter must be positive");
  if (raw.threads == 0 || raw.threads < -1) throw UsageError("--threads must be positive");
  cfg.thread_count = raw.threads > 0 ? static_cast<int>(raw.threads) : detail::default_threads();
  cfg.seed = raw.seed;
  cmd.zero_init = raw.init == "zero";

  // Solver list and compatibility.
  if (raw.solver.empty()) {
    if (cmd.subcommand == Subcommand::train) {
      cmd.solvers = {SolverKind::piano};
    } else if (cmd.subcommand == Subcommand::bench) {
      cmd.solvers = {SolverKind::piano, SolverKind::bohning};
    } else if (cfg.reg == Regularization::l1) {
      cmd.solvers = {SolverKind::piano, SolverKind::coord_l1};
    } else {
      cmd.solvers = {SolverKind::piano, SolverKind::irls, SolverKind::bohning};
    }
  } else {
    for (const auto& name : detail::split(raw.solver, ',')) cmd.solvers.push_back(parse_solver(name));
  }
  if (cmd.subcommand == Subcommand::train && cmd.solvers.size() != 1)
    throw UsageError("train takes a single --solver");
  for (auto s : cmd.solvers) {
    if ((s == SolverKind::irls || s == SolverKind::bohning) && cfg.reg != Regularization::none)
      throw UsageError("--solver " + to_string(s) + " is incompatible with --reg " + raw.reg +
                       " (it only solves the unregularized problem)");
    if (s == SolverKind::coord_l1 && cfg.reg != Regularization::l1)
      throw UsageError("--solver coord-l1 requires --reg l1");
  }
  if (is_compare && cfg.reg == Regularization::l0)
    throw UsageError("compare supports --reg none or l1 only");

  if (!raw.trace.empty()) {
    detail::require_parent_dir(raw.trace, "--trace");
    cmd.trace_path = raw.trace;
  }
  if (!raw.out.empty()) {
    detail::require_parent_dir(raw.out, "--out");
    cmd.out_path = raw.out;
  }

  cmd.target_frac = raw.target;
  if (!(raw.target > 0.0)) throw UsageError("--target-frac must be positive");
  cmd.gate = raw.gate;
  if (!(raw.gate > 0.0)) throw UsageError("--gate must be positive");
  if (!raw.sweep.empty()) {
    if (!cmd.source.synth) throw UsageError("--sweep-d needs --synth data");
    for (const auto& item : detail::split(raw.sweep, ',')) {
      const long long d = detail::parse_count("sweep-d", item);
      if (d < 1) throw UsageError("--sweep-d entries must be positive");
      cmd.sweep_d.push_back(static_cast<Index>(d));
    }
  }
  return cmd;
}

namespace detail {

inline Dataset load_source(const DataSource& src, Index d_override = 0) {
  if (src.synth) {
    SyntheticSpec spec = *src.synth;
    if (d_override > 0) spec.d = d_override;
    spec.append_bias = spec.append_bias || src.append_bias;
    return synth_generate(spec).data;
  }
  if (src.format == "libsvm") return load_libsvm(*src.path, std::nullopt, src.append_bias);
  return load_csv(*src.path, src.label_column, src.has_header, src.append_bias);
}

inline WeightMatrix initial_weights(const CliCommand& cmd, const Dataset& data) {
  if (cmd.zero_init) return WeightMatrix::zeros(data.classes(), data.dims());
  // Offset keeps the initial weights independent of the data stream.
  return WeightMatrix::uniform(data.classes(), data.dims(), cmd.config.seed + 0x9e3779b97f4a7c15ULL);
}

inline FitResult run_solver(SolverKind s, const Dataset& data, const WeightMatrix& W0,
                            const FitConfig& cfg, const FitObserver& observer = {}) {
  switch (s) {
    case SolverKind::piano: return piano_fit_any(data, W0, cfg, observer);
    case SolverKind::irls: return irls_fit(data, W0, cfg, std::nullopt, observer);
    case SolverKind::bohning: return bohning_mm_fit(data, W0, cfg, observer);
    case SolverKind::coord_l1: return coord_mm_l1_fit(data, W0, cfg, observer);
  }
  throw Error("unreachable solver kind");
}

inline void check_solver_size(SolverKind s, const Dataset& data) {
  if (s != SolverKind::piano && data.dims() * data.classes() > kDenseLimit)
    throw UsageError("--solver " + to_string(s) + " needs d * m <= 5000");
}

}  // namespace detail

inline int run_train(const CliCommand& cmd, std::ostream& out, std::ostream& err) {
  try {
    const Dataset data = detail::load_source(cmd.source);
    const SolverKind solver = cmd.solvers.front();
    detail::check_solver_size(solver, data);
    cmd.config.validate(data.dims() * data.classes());
    const WeightMatrix W0 = detail::initial_weights(cmd, data);
    const FitResult fit = detail::run_solver(solver, data, W0, cmd.config);

    if (cmd.out_path) {
      std::ofstream f(*cmd.out_path);
      if (!f) throw Error("cannot write " + *cmd.out_path);
      auto j = weights_to_json(fit.weights, data.class_names);
      j["solver"] = to_string(solver);
      f << j.dump(2) << '\n';
    }
    if (cmd.trace_path) write_trace(fit.trace, *cmd.trace_path, detail::trace_format_for(*cmd.trace_path));

    out << std::setprecision(17) << "solver=" << to_string(solver)
        << " objective=" << fit.final_objective() << " iterations=" << fit.iterations()
        << " nnz=" << fit.weights.nnz() << " converged=" << (fit.converged ? "yes" : "no") << '\n';
    return fit.converged ? 0 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

struct BenchRow {
  SolverKind solver;
  Index n, d, m;
  int iterations;
  double time_ms;
  bool reached;
};

/// Time for each solver to bring the objective to target_frac times the
/// shared initial objective, over the requested dimensions.
inline int run_bench(const CliCommand& cmd, std::ostream& out, std::ostream& err) {
  try {
    std::vector<Index> dims = cmd.sweep_d;
    if (dims.empty()) dims.push_back(0);  // use the source as given
    for (Index d : dims) {
      if (d > 0 && cmd.source.synth)
        for (auto s : cmd.solvers)
          if (s != SolverKind::piano && d * cmd.source.synth->m > kDenseLimit)
            throw UsageError("--solver " + to_string(s) + " needs d * m <= 5000 (sweep d = " +
                             std::to_string(d) + ")");
    }

    std::vector<BenchRow> rows;
    for (Index d : dims) {
      const Dataset data = detail::load_source(cmd.source, d);
      for (auto s : cmd.solvers) detail::check_solver_size(s, data);
      cmd.config.validate(data.dims() * data.classes());
      const WeightMatrix W0 = detail::initial_weights(cmd, data);
      const double target = cmd.target_frac * penalized_objective(W0, data, cmd.config);
      for (auto s : cmd.solvers) {
        std::optional<TraceRecord> hit;
        const FitResult fit = detail::run_solver(s, data, W0, cmd.config, [&](const TraceRecord& r) {
          if (r.objective <= target) {
            hit = r;
            return true;
          }
          return false;
        });
        rows.push_back({s, data.samples(), data.dims(), data.classes(),
                        hit ? hit->iter : fit.iterations(),
                        hit ? hit->wall_ms : fit.trace.back().wall_ms, hit.has_value()});
      }
    }

    std::ostringstream table;
    table << "solver,n,d,m,iters,time_ms,reached\n";
    for (const auto& r : rows) {
      table << to_string(r.solver) << ',' << r.n << ',' << r.d << ',' << r.m << ',' << r.iterations
            << ',' << std::setprecision(10) << r.time_ms << ',' << (r.reached ? "true" : "false") << '\n';
    }
    if (cmd.out_path) {
      std::ofstream f(*cmd.out_path);
      if (!f) throw Error("cannot write " + *cmd.out_path);
      f << table.str();
    }
    out << table.str();
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

/// Runs every requested solver from a shared start and checks that all
/// pairwise relative objective deltas are within the gate.
inline int run_compare(const CliCommand& cmd, std::ostream& out, std::ostream& err) {
  std::vector<std::pair<SolverKind, double>> results;
  try {
    const Dataset data = detail::load_source(cmd.source);
    for (auto s : cmd.solvers) detail::check_solver_size(s, data);
    cmd.config.validate(data.dims() * data.classes());
    const WeightMatrix W0 = detail::initial_weights(cmd, data);
    out << std::setprecision(12);
    for (auto s : cmd.solvers) {
      const FitResult fit = detail::run_solver(s, data, W0, cmd.config);
      results.emplace_back(s, fit.final_objective());
      out << to_string(s) << " objective=" << fit.final_objective() << " iterations=" << fit.iterations()
          << " converged=" << (fit.converged ? "yes" : "no") << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  bool ok = true;
  for (std::size_t a = 0; a < results.size(); ++a) {
    for (std::size_t b = a + 1; b < results.size(); ++b) {
      const double denom = std::max(std::abs(results[a].second), std::abs(results[b].second));
      const double delta = denom == 0.0 ? 0.0 : std::abs(results[a].second - results[b].second) / denom;
      const bool pass = delta <= cmd.gate;
      ok = ok && pass;
      out << to_string(results[a].first) << " vs " << to_string(results[b].first)
          << " rel_delta=" << delta << (pass ? " ok" : " FAIL") << '\n';
    }
  }
  return ok ? 0 : 3;
}

/// Full entry point used by the executable and by tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CliCommand cmd;
  try {
    cmd = parse_command(argc, argv);
  } catch (const HelpRequested& help) {
    out << help.text;
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  switch (cmd.subcommand) {
    case Subcommand::train: return run_train(cmd, out, err);
    case Subcommand::bench: return run_bench(cmd, out, err);
    case Subcommand::compare: return run_compare(cmd, out, err);
  }
  return 1;
}

}  // namespace piano::cli
