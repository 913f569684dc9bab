// stpca: simulate, population, sweep, check, report.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure,
// 4 missing inputs.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "stpca/config.hpp"
#include "stpca/errors.hpp"
#include "stpca/harness.hpp"

namespace fs = std::filesystem;
using namespace stpca;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitMissing = 4;

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::vector<std::string> inputs;
  bool deterministic = false;
  bool dry_run = false;
  bool force = false;
  bool quiet = false;
};

RunConfig load(const Options& opt) {
  if (opt.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_config(opt.config, opt.overrides);
  if (!opt.quiet)
    for (const std::string& n : cfg.notices) std::cerr << "notice: " << n << '\n';
  if (opt.seed) {
    cfg.trial.seed = *opt.seed;
    cfg.sweep.master_seed = *opt.seed;
  }
  cfg.trial.deterministic = opt.deterministic;
  if (!opt.out.empty()) cfg.output.dir = opt.out;
  return cfg;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output.dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

std::string provenance_comment(const std::string& hash) {
  return std::string("# stpca ") + version() + " config " + hash + "\n";
}

int cmd_simulate(const Options& opt) {
  RunConfig cfg = load(opt);
  TrialConfig trial = cfg.trial;
  const bool summary_only =
      trial.dynamics == DynamicsKind::Sgd ? trial.sgd.steps == 0 : trial.flow.cfg.horizon == 0.0;
  trial.keep_trajectory = !summary_only;
  const TrialRecord rec = run_trial(trial);
  const fs::path dir = output_dir(cfg);
  write_file(dir / "summary.csv", csv_header(rec.r) + "\n" + csv_row(rec) + "\n");
  if (!summary_only) write_file(dir / "trial.json", trial_json(rec) + "\n");
  if (!opt.quiet) {
    std::cout << "config " << cfg.hash << ", " << to_string(rec.dynamics) << ", N=" << rec.n
              << ", r=" << rec.r << ", p=" << rec.p << ", seed=" << rec.seed << '\n';
    std::cout << "exact recovery: " << (rec.exact ? "true" : "false") << '\n';
    std::cout << "permutation recovery: " << (rec.permutation ? "true" : "false") << '\n';
    std::cout << "sequential elimination: " << (rec.elimination.satisfied ? "true" : "false") << '\n';
    if (rec.neumann_violations) std::cout << "neumann violations: " << rec.neumann_violations << '\n';
    if (!rec.note.empty()) std::cout << "note: " << rec.note << '\n';
  }
  return 0;
}

int cmd_population(const Options& opt) {
  RunConfig cfg = load(opt);
  TrialConfig trial = cfg.trial;
  trial.dynamics = DynamicsKind::Population;
  trial.keep_trajectory = true;
  const TrialRecord rec = run_trial(trial);
  const Trajectory& tr = *rec.trajectory;
  const Eigen::Index r = rec.r;

  std::vector<Matrix> grams;
  for (const Matrix& m : tr.corr) grams.push_back(m.transpose() * m);
  const Matrix theta = eigen_track(grams);

  std::ostringstream csv;
  csv << provenance_comment(cfg.hash) << 't';
  for (Eigen::Index i = 1; i <= r; ++i)
    for (Eigen::Index j = 1; j <= r; ++j) csv << ",m_" << i << '_' << j;
  for (Eigen::Index k = 1; k <= r; ++k) csv << ",theta_" << k;
  csv << '\n';
  for (std::size_t k = 0; k < tr.size(); ++k) {
    csv << format_double(tr.times[k]);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < r; ++j) csv << ',' << format_double(tr.corr[k](i, j));
    for (Eigen::Index c = 0; c < r; ++c) csv << ',' << format_double(theta(static_cast<Eigen::Index>(k), c));
    csv << '\n';
  }
  const fs::path dir = output_dir(cfg);
  write_file(dir / "population.csv", csv.str());

  std::ostringstream meta;
  meta << "{\"config_hash\":\"" << cfg.hash << "\",\"version\":\"" << version()
       << "\",\"rows\":" << tr.size() << ",\"truncated\":" << (tr.truncated ? "true" : "false")
       << ",\"note\":\"" << tr.note << "\",\"exact_recovery\":" << (rec.exact ? "true" : "false")
       << ",\"sequential_elimination\":" << (rec.elimination.satisfied ? "true" : "false") << "}\n";
  write_file(dir / "population.meta.json", meta.str());
  if (!opt.quiet) {
    std::cout << "rows: " << tr.size() << ", final t = " << format_double(tr.times.back()) << '\n';
    std::cout << "exact recovery: " << (rec.exact ? "true" : "false") << '\n';
    if (tr.truncated) std::cout << "truncated: " << tr.note << '\n';
  }
  return 0;
}

std::string cell_table(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  os << "| cell | N | alpha | steps | trials | successes | errors | fraction | 95% CI |\n"
     << "|---|---|---|---|---|---|---|---|---|\n";
  os << std::fixed;
  for (const CellSummary& c : cells) {
    os << "| " << c.cell.cell_id << " | " << c.cell.n << " | ";
    if (std::isnan(c.cell.alpha)) os << "-";
    else os << std::setprecision(3) << c.cell.alpha;
    os << " | " << c.cell.steps << " | " << c.trials << " | " << c.successes << " | " << c.failures
       << " | " << std::setprecision(3) << c.fraction << " | [" << c.ci.lower << ", " << c.ci.upper
       << "] |\n";
  }
  return os.str();
}

int cmd_sweep(const Options& opt) {
  RunConfig cfg = load(opt);
  const double flops = estimate_flops(cfg.trial, cfg.sweep);
  const auto cells = sweep_cells(cfg.sweep);
  if (opt.dry_run) {
    std::cout << "cells: " << cells.size() << ", trials per cell: " << cfg.sweep.trials
              << "\nestimated flops: " << std::scientific << std::setprecision(3) << flops
              << " (limit " << cfg.sweep.flop_limit << ")\n";
    return 0;
  }
  if (flops > cfg.sweep.flop_limit && !opt.force)
    throw ConfigError("estimated " + format_double(flops) + " flops exceeds sweep.flop_limit; use --force");
  const fs::path dir = output_dir(cfg);
  SweepOptions so;
  so.csv_path = (dir / "sweep.csv").string();
  so.deterministic = opt.deterministic;
  const SweepSummary summary = run_sweep(cfg.trial, cfg.sweep, so);
  const ThresholdEstimate est = estimate_threshold(summary.cells);
  write_file(dir / "threshold.json", threshold_json(est, cfg.hash) + "\n");
  if (!opt.quiet) {
    if (summary.skipped) std::cout << "resumed: " << summary.skipped << " trials kept\n";
    std::cout << cell_table(summary.cells);
  }
  return 0;
}

int cmd_check(const Options& opt) {
  RunConfig cfg = load(opt);
  const TrialConfig& t = cfg.trial;
  if (t.dynamics == DynamicsKind::Population)
    throw ConfigError("check needs a model with a planted frame, not population dynamics");
  validate(t.conditions);
  const bool with_c0 = t.dynamics == DynamicsKind::GradientFlow || t.dynamics == DynamicsKind::Langevin;
  std::size_t pass1 = 0, pass1_signed = 0, pass2 = 0, pass0 = 0;
  std::ostringstream csv;
  csv << provenance_comment(cfg.hash) << "sample,condition1,condition1_signed,condition2,condition0\n";
  rng::Stream model_stream(rng::derive_seed(t.seed, 1));
  SpikedModel model = make_model(t.model.n, t.model.r, t.model.p, t.model.lambdas, model_stream);
  model.signal_scale = t.model.signal_scale;
  const StiefelPoint v = model.v_sqrt_n();
  const NoiseTensor w = with_c0 && t.flow.noise_enabled
                            ? NoiseTensor::sample(model.n, model.p, t.model.noise,
                                                  rng::derive_seed(t.seed, 3), t.model.memory_budget)
                            : NoiseTensor::zeros(model.n, model.p);
  for (std::size_t k = 0; k < cfg.check.samples; ++k) {
    rng::Stream stream(rng::derive_seed(t.seed, 2, k));
    const StiefelPoint x = sample_invariant(model.n, model.r, Scale::SqrtN, stream);
    const bool c1 = check_condition1(x, v, t.conditions, t.condition1_sign).ok;
    const bool c1s = check_condition1(x, v, t.conditions, SignMode::Signed).ok;
    const bool c2 = model.p >= 3 && check_condition2(x, v, model.lambdas, model.p, t.conditions).ok;
    const bool c0 = with_c0 &&
                    check_condition0_level1(x, w, model, t.flow.cfg.m_samples, t.flow.cfg.beta, t.conditions).ok;
    pass1 += c1;
    pass1_signed += c1s;
    pass2 += c2;
    pass0 += c0;
    csv << k << ',' << c1 << ',' << c1s << ',';
    csv << (model.p >= 3 ? std::to_string(c2) : std::string()) << ',';
    csv << (with_c0 ? std::to_string(c0) : std::string()) << '\n';
  }
  const fs::path dir = output_dir(cfg);
  write_file(dir / "check.csv", csv.str());
  const double n = static_cast<double>(std::max<std::size_t>(cfg.check.samples, 1));
  if (!opt.quiet) {
    std::cout << std::fixed << std::setprecision(3) << "| condition | pass rate |\n|---|---|\n";
    std::cout << "| condition 1 (" << (t.condition1_sign == SignMode::Absolute ? "absolute" : "signed")
              << ") | " << pass1 / n << " |\n";
    std::cout << "| condition 1 (signed) | " << pass1_signed / n << " |\n";
    if (model.p >= 3) std::cout << "| condition 2 | " << pass2 / n << " |\n";
    if (with_c0) std::cout << "| condition 0 | " << pass0 / n << " |\n";
    std::cout << "samples: " << cfg.check.samples << '\n';
  }
  return 0;
}

int cmd_report(const Options& opt) {
  std::vector<std::string> inputs = opt.inputs;
  if (inputs.empty()) {
    std::string dir = opt.out;
    if (dir.empty() && !opt.config.empty()) dir = load(opt).output.dir;
    if (dir.empty()) dir = "out";
    if (fs::is_directory(dir))
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".csv") inputs.push_back(entry.path().string());
  }
  std::sort(inputs.begin(), inputs.end());
  struct Acc {
    std::size_t trials = 0, successes = 0, errors = 0;
    std::string alpha, steps, n, dynamics;
  };
  std::map<std::pair<std::string, long long>, Acc> cells;
  std::set<std::string> hashes, versions;
  for (const std::string& path : inputs) {
    if (!fs::exists(path)) throw MissingInput("no such file: " + path);
    const CsvTable table = read_csv(path);
    const auto col = [&](const char* name) -> std::optional<std::size_t> {
      const auto it = std::find(table.header.begin(), table.header.end(), name);
      if (it == table.header.end()) return std::nullopt;
      return static_cast<std::size_t>(it - table.header.begin());
    };
    const auto c_cell = col("cell_id"), c_success = col("success");
    if (!c_cell || !c_success) continue;  // not a result table
    const auto c_n = col("N"), c_alpha = col("budget_exponent"), c_steps = col("steps");
    const auto c_dyn = col("dynamics"), c_hash = col("config_hash"), c_ver = col("version");
    const auto c_err = col("error");
    const std::string name = fs::path(path).filename().string();
    for (const auto& row : table.rows) {
      Acc& a = cells[{name, std::stoll(row[*c_cell])}];
      ++a.trials;
      if (c_err && !row[*c_err].empty()) ++a.errors;
      else if (row[*c_success] == "1") ++a.successes;
      if (c_n) a.n = row[*c_n];
      if (c_alpha) a.alpha = row[*c_alpha];
      if (c_steps) a.steps = row[*c_steps];
      if (c_dyn) a.dynamics = row[*c_dyn];
      if (c_hash) hashes.insert(row[*c_hash]);
      if (c_ver) versions.insert(row[*c_ver]);
    }
  }
  if (cells.empty()) throw MissingInput("no result rows found");
  std::ostringstream os;
  os << "<!-- stpca " << version() << "; configs:";
  for (const auto& h : hashes) os << ' ' << h;
  os << "; written by:";
  for (const auto& v : versions) os << ' ' << v;
  os << " -->\n\n";
  os << "| file | cell | dynamics | N | alpha | steps | trials | successes | errors | fraction | 95% CI |\n"
     << "|---|---|---|---|---|---|---|---|---|---|---|\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& [key, a] : cells) {
    const Interval ci = wilson_interval(a.successes, a.trials);
    os << "| " << key.first << " | " << key.second << " | " << a.dynamics << " | " << a.n << " | "
       << (a.alpha.empty() ? "-" : a.alpha) << " | " << a.steps << " | " << a.trials << " | "
       << a.successes << " | " << a.errors << " | "
       << static_cast<double>(a.successes) / static_cast<double>(a.trials) << " | [" << ci.lower
       << ", " << ci.upper << "] |\n";
  }
  if (!opt.out.empty()) write_file(fs::path(opt.out) / "report.md", os.str());
  if (!opt.quiet) std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-spiked tensor PCA on the Stiefel manifold"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1, 1);
  Options opt;

  const auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config, "INI configuration file");
    if (needs_config) c->required();
    sub->add_option("--out", opt.out, "output directory (default: output.dir)");
    sub->add_option("--override", opt.overrides, "section.key=value, repeatable, last one wins")
        ->allow_extra_args(false);
    sub->add_flag("--quiet", opt.quiet, "suppress stdout summaries");
  };
  auto* simulate = app.add_subcommand("simulate", "run one trial of the configured dynamics");
  common(simulate, true);
  simulate->add_option("--seed", opt.seed, "trial seed");
  simulate->add_flag("--deterministic", opt.deterministic, "write zero wall-clock fields");

  auto* population = app.add_subcommand("population", "integrate the population ODE");
  common(population, true);
  population->add_option("--seed", opt.seed, "seed for random initial correlations");
  population->add_flag("--deterministic", opt.deterministic, "write zero wall-clock fields");

  auto* sweep = app.add_subcommand("sweep", "run the (N, budget) grid");
  common(sweep, true);
  sweep->add_option("--seed", opt.seed, "master seed");
  sweep->add_flag("--deterministic", opt.deterministic, "write zero wall-clock fields");
  sweep->add_flag("--dry-run", opt.dry_run, "print the cost estimate and exit");
  sweep->add_flag("--force", opt.force, "run even above sweep.flop_limit");

  auto* check = app.add_subcommand("check", "initial-condition pass rates over sampled inits");
  common(check, true);
  check->add_option("--seed", opt.seed, "seed");

  auto* report = app.add_subcommand("report", "markdown summary of existing result CSVs");
  common(report, false);
  report->add_option("inputs", opt.inputs, "result CSV files (default: *.csv in the output directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(opt);
    if (*population) return cmd_population(opt);
    if (*sweep) return cmd_sweep(opt);
    if (*check) return cmd_check(opt);
    if (*report) return cmd_report(opt);
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const SingularMatrixError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const BlowUpError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return 0;
}
