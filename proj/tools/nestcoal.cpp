// Command-line front end: solve, kernel, simulate, report, pgf-check, verify.
//
// Exit codes: 0 success, 1 a numeric threshold was not met, 2 usage error or
// malformed input.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nestcoal/nestcoal.hpp"

namespace nc = nestcoal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitThreshold = 1;
constexpr int kExitUsage = 2;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Explicit --out wins; otherwise $NESTCOAL_OUT_DIR/<fallback>; otherwise stdout.
std::optional<std::string> resolve_out(const std::string& out, const std::string& fallback) {
  if (!out.empty()) return out;
  if (const char* dir = std::getenv("NESTCOAL_OUT_DIR"); dir && *dir)
    return (std::filesystem::path(dir) / fallback).string();
  return std::nullopt;
}

void emit(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream os(*path, std::ios::binary);
  if (!os) throw usage_error("cannot write '" + *path + "'");
  os << text;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// Accepts either a bare PMF document or a solver report (uses fixed_point).
nc::TruncatedPMF load_reference(const std::string& path) {
  const nlohmann::json j = nc::read_json_file(path);
  try {
    if (j.is_object() && j.contains("fixed_point")) return nc::pmf_from_json(j.at("fixed_point"));
    return nc::pmf_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw nc::format_error("'" + path + "': " + e.what());
  }
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw usage_error("--grid: '" + item + "' is not a number");
    }
  }
  if (parts.size() != 3) throw usage_error("--grid must be start:stop:step");
  const double start = parts[0], stop = parts[1], step = parts[2];
  if (!(step > 0.0) || stop < start) throw usage_error("--grid needs step > 0 and stop >= start");
  if (!(start > 0.0) || !(stop < 1.0)) throw usage_error("--grid points must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> xs(n);
  for (std::size_t k = 0; k < n; ++k) xs[k] = start + static_cast<double>(k) * step;
  return xs;
}

// --- solve ----------------------------------------------------------------

struct SolveArgs {
  nc::SolverConfig cfg;
  std::string out;
};

int cmd_solve(const SolveArgs& a) {
  a.cfg.validate();
  const nc::SolverReport rep = nc::sandwich_solve(a.cfg);
  emit(resolve_out(a.out, "solve.json"), dump(nc::to_json(rep, a.cfg)));
  std::cerr << "sandwich_gap=" << nc::format_double(rep.sandwich_gap)
            << " iterations=" << rep.iterations
            << " recurrence_residual=" << nc::format_double(rep.recurrence_residual)
            << " converged=" << (rep.converged ? "true" : "false") << " (" << rep.diagnostics << ")\n";
  return rep.converged ? kExitOk : kExitThreshold;
}

// --- kernel ---------------------------------------------------------------

struct KernelArgs {
  double c = 1.0;
  std::string j = "inf";
  std::size_t max_i = 20;
  double tol = 1e-12;
};

int cmd_kernel(const KernelArgs& a) {
  const nc::Count j = nc::Count::parse(a.j);
  if (!(a.c > 0.0)) throw usage_error("--c must be positive");
  if (a.max_i == 0) throw usage_error("--max-i must be >= 1");
  if (!j.is_infinite() && j.value() == 0) throw usage_error("--j must be >= 1 or 'inf'");
  std::vector<double> probs;
  double residual = 0.0;
  if (j.is_infinite()) {
    auto row = nc::kernel_row_infinite(a.c, a.max_i, a.tol);
    probs = std::move(row.probs);
    residual = row.residual;
  } else {
    auto row = nc::kernel_row(j.value(), a.c);
    const std::size_t keep = std::min(a.max_i, row.size());
    for (std::size_t i = keep; i < row.size(); ++i) residual += row[i];
    row.resize(keep);
    probs = std::move(row);
  }
  nlohmann::json out{{"c", a.c}, {"j", j.str()}, {"max_i", a.max_i}, {"probs", probs}, {"residual", residual}};
  std::cout << dump(out);
  return kExitOk;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::size_t species = 300;
  std::string lineages = "20";
  std::size_t target_m = 4;
  double c = 1.0;
  std::size_t reps = 100;
  std::uint64_t seed = 1;
  std::size_t l_max = nc::kDefaultDescentCap;
  std::size_t threads = 1;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  nc::SimConfig cfg;
  cfg.species = a.species;
  cfg.lineages = nc::Count::parse(a.lineages);
  cfg.target_m = a.target_m;
  cfg.c = a.c;
  cfg.l_max = a.l_max;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
  if (a.reps == 0) throw usage_error("--reps must be >= 1");
  const auto records = nc::simulate_replicates(cfg, a.reps, a.seed, a.threads);
  std::ostringstream os;
  nc::write_records_csv(os, records);
  emit(resolve_out(a.out, "records.csv"), os.str());
  return kExitOk;
}

// --- report ---------------------------------------------------------------

struct ReportArgs {
  std::string records;
  std::string reference;
  std::string out;
  std::string plot_csv;
  nc::ExperimentThresholds th;
};

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.records);
  if (!in) throw nc::format_error("cannot open '" + a.records + "'");
  const auto records = nc::read_records_csv(in);
  const nc::TruncatedPMF ref = load_reference(a.reference);
  const nc::ExperimentReport rep = nc::build_report(records, ref, a.th);

  const auto out_path = resolve_out(a.out, "report.json");
  emit(out_path, dump(nc::to_json(rep, a.th)));

  std::string plot = a.plot_csv;
  if (plot.empty() && out_path) plot = std::filesystem::path(*out_path).replace_extension(".csv").string();
  if (!plot.empty()) {
    std::ostringstream os;
    os << "value,empirical_p,reference_p\n";
    for (std::size_t i = 1; i <= ref.trunc(); ++i)
      os << i << ',' << nc::format_double(rep.empirical[i]) << ',' << nc::format_double(ref[i]) << '\n';
    emit(plot, os.str());
  }
  std::cerr << "tv=" << nc::format_double(rep.tv) << " pass=" << (rep.pass ? "true" : "false") << "\n";
  return rep.pass ? kExitOk : kExitThreshold;
}

// --- pgf-check ------------------------------------------------------------

struct PgfArgs {
  double c = 1.0;
  std::string grid = "0.05:0.9:0.05";
  bool closed_form = false;
  std::string input;
  std::size_t trunc = 500;
  double tol = 1e-12;
  double max_residual = 1e-8;
  std::string out;
};

int cmd_pgf_check(const PgfArgs& a) {
  const std::vector<double> xs = parse_grid(a.grid);
  double c = a.c;
  std::optional<nc::TruncatedPMF> pmf;
  if (a.closed_form) {
    if (c != 1.0) throw usage_error("--closed-form only exists for --c 1");
    pmf = nc::closed_form_c1(a.trunc);
  } else if (!a.input.empty()) {
    const nlohmann::json j = nc::read_json_file(a.input);
    try {
      pmf = j.contains("fixed_point") ? nc::pmf_from_json(j.at("fixed_point")) : nc::pmf_from_json(j);
      if (j.contains("config") && j.at("config").contains("c")) c = j.at("config").at("c").get<double>();
    } catch (const std::exception& e) {
      throw nc::format_error("'" + a.input + "': " + e.what());
    }
  } else {
    nc::SolverConfig cfg;
    cfg.c = c;
    cfg.trunc = a.trunc;
    cfg.tol = a.tol;
    pmf = nc::sandwich_solve(cfg).fixed_point;
  }
  const nc::PGFSeries series(*pmf);
  std::ostringstream os;
  os << "x,R,ode_residual,g_residual\n";
  double worst = 0.0;
  for (double x : xs) {
    const double r = nc::pgf_eval(series, x);
    const double ode = nc::ode_residual(series, c, x);
    const double g = nc::g_residual(series, c, x);
    worst = std::max({worst, ode, g});
    os << nc::format_double(x) << ',' << nc::format_double(r) << ',' << nc::format_double(ode) << ','
       << nc::format_double(g) << '\n';
  }
  emit(resolve_out(a.out, "pgf_check.csv"), os.str());
  std::cerr << "max_residual=" << nc::format_double(worst) << "\n";
  return worst < a.max_residual ? kExitOk : kExitThreshold;
}

// --- verify ---------------------------------------------------------------

struct VerifyArgs {
  double c = 1.0;
  std::size_t trunc = 500;
  double tol = 1e-13;
  std::size_t max_i = 50;
  double threshold = 1e-10;
};

int cmd_verify(const VerifyArgs& a) {
  if (a.c != 1.0) throw usage_error("verify compares against the c = 1 closed form; use --c 1");
  if (a.max_i == 0 || a.max_i > a.trunc) throw usage_error("--max-i must lie in [1, trunc]");
  nc::SolverConfig cfg;
  cfg.c = a.c;
  cfg.trunc = a.trunc;
  cfg.tol = a.tol;
  const nc::SolverReport rep = nc::sandwich_solve(cfg);
  const nc::TruncatedPMF exact = nc::closed_form_c1(a.trunc);
  double worst = 0.0;
  for (std::size_t i = 1; i <= a.max_i; ++i) worst = std::max(worst, std::abs(rep.fixed_point[i] - exact[i]));
  const bool ok = worst < a.threshold;
  std::cout << "max_abs_deviation=" << nc::format_double(worst) << " over i<=" << a.max_i
            << " threshold=" << nc::format_double(a.threshold) << " sandwich_gap="
            << nc::format_double(rep.sandwich_gap) << " " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitThreshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed point, simulation and checks for the Yule-Kingman nested coalescent"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Solve for the fixed point with certified sandwich bounds");
  s->add_option("--c", solve.cfg.c, "Species merger rate c")->capture_default_str();
  s->add_option("--trunc", solve.cfg.trunc, "Truncation level M")->capture_default_str();
  s->add_option("--tol", solve.cfg.tol, "TV stopping tolerance")->capture_default_str();
  s->add_option("--max-iters", solve.cfg.max_iters, "Iteration cap")->capture_default_str();
  s->add_option("--kernel-tol", solve.cfg.kernel_tol, "Infinite-product tolerance")->capture_default_str();
  s->add_option("--out", solve.out, "Output JSON path (default: $NESTCOAL_OUT_DIR/solve.json or stdout)");

  KernelArgs kern;
  auto* k = app.add_subcommand("kernel", "Print a row P(K_j(Y) = i) as JSON");
  k->add_option("--c", kern.c, "Rate of the exponential time Y")->capture_default_str();
  k->add_option("--j", kern.j, "Initial lineage count (integer or 'inf')")->capture_default_str();
  k->add_option("--max-i", kern.max_i, "Largest i to print")->capture_default_str();
  k->add_option("--tol", kern.tol, "Infinite-product tolerance")->capture_default_str();

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "Simulate replicates and write records CSV");
  m->add_option("--species", sim.species, "Initial species count s")->capture_default_str();
  m->add_option("--lineages", sim.lineages, "Lineages per species (integer or 'inf')")->capture_default_str();
  m->add_option("--target-m", sim.target_m, "Record counts just before species m -> m-1")->capture_default_str();
  m->add_option("--c", sim.c, "Species death rate c")->capture_default_str();
  m->add_option("--reps", sim.reps, "Number of replicates")->capture_default_str();
  m->add_option("--seed", sim.seed, "Base seed")->capture_default_str();
  m->add_option("--l-max", sim.l_max, "Lineage cap replacing 'inf'")->capture_default_str();
  m->add_option("--threads", sim.threads, "Worker threads (output does not depend on it)")->capture_default_str();
  m->add_option("--out", sim.out, "Output CSV path (default: $NESTCOAL_OUT_DIR/records.csv or stdout)");

  ReportArgs rpt;
  auto* r = app.add_subcommand("report", "Compare simulation records with a reference PMF");
  r->add_option("--records", rpt.records, "Records CSV from 'simulate'")->required();
  r->add_option("--reference", rpt.reference, "Reference PMF JSON or 'solve' output")->required();
  r->add_option("--out", rpt.out, "Report JSON path (default: $NESTCOAL_OUT_DIR/report.json or stdout)");
  r->add_option("--plot-csv", rpt.plot_csv, "Plot CSV path (default: report path with .csv)");
  r->add_option("--tv-max", rpt.th.tv_max, "TV pass threshold")->capture_default_str();
  r->add_option("--se-multiple", rpt.th.correlation_se_multiple, "Correlation pass band in SE")
      ->capture_default_str();
  r->add_option("--bootstrap", rpt.th.bootstrap_resamples, "Bootstrap resamples for the TV SE")
      ->capture_default_str();
  r->add_option("--bootstrap-seed", rpt.th.bootstrap_seed, "Bootstrap seed")->capture_default_str();

  PgfArgs pgf;
  auto* p = app.add_subcommand("pgf-check", "Residuals of the generating-function ODEs as CSV");
  p->add_option("--c", pgf.c, "Rate c (overridden by --input's config)")->capture_default_str();
  p->add_option("--grid", pgf.grid, "start:stop:step inside (0, 1)")->capture_default_str();
  p->add_flag("--closed-form", pgf.closed_form, "Check the c = 1 closed form instead of a solve");
  p->add_option("--input", pgf.input, "Use the fixed point from a 'solve' JSON");
  p->add_option("--trunc", pgf.trunc, "Truncation level when solving or building the closed form")
      ->capture_default_str();
  p->add_option("--tol", pgf.tol, "Solver tolerance when solving")->capture_default_str();
  p->add_option("--max-residual", pgf.max_residual, "Pass threshold on every residual")->capture_default_str();
  p->add_option("--out", pgf.out, "Output CSV path (default: $NESTCOAL_OUT_DIR/pgf_check.csv or stdout)");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Compare the solved c = 1 fixed point with (2i-1)/3^i");
  v->add_option("--c", ver.c, "Must be 1")->capture_default_str();
  v->add_option("--trunc", ver.trunc, "Truncation level M")->capture_default_str();
  v->add_option("--tol", ver.tol, "Solver tolerance")->capture_default_str();
  v->add_option("--max-i", ver.max_i, "Compare entries i <= max-i")->capture_default_str();
  v->add_option("--threshold", ver.threshold, "Pass threshold on the max deviation")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*s) return cmd_solve(solve);
    if (*k) return cmd_kernel(kern);
    if (*m) return cmd_simulate(sim);
    if (*r) return cmd_report(rpt);
    if (*p) return cmd_pgf_check(pgf);
    if (*v) return cmd_verify(ver);
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nc::format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitThreshold;
  }
  return kExitUsage;
}
