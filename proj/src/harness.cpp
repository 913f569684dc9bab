#include "stpca/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "stpca/errors.hpp"

#ifndef STPCA_VERSION
#define STPCA_VERSION "0.0.0"
#endif

namespace stpca {

namespace {

constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kLangevinStream = 4;

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const BlowUpError& e) {
    throw BlowUpError(context + e.what(), e.blowup_time());
  } catch (const NumericError& e) {
    throw NumericError(context + e.what());
  } catch (const SingularMatrixError& e) {
    throw NumericError(context + e.what());
  } catch (const ConventionError& e) {
    throw ConventionError(context + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(context + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + e.what());
  } catch (const Error& e) {
    throw InvalidArgument(context + e.what());
  }
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

std::string json_number(double v) { return std::isfinite(v) ? format_double(v) : "null"; }

std::string csv_number(double v) { return std::isnan(v) ? "" : format_double(v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

Matrix population_start(const TrialConfig& cfg) {
  const Eigen::Index r = cfg.model.r;
  if (cfg.population.m0) {
    if (cfg.population.m0->rows() != r || cfg.population.m0->cols() != r)
      throw DimensionError("population m0 must be r x r");
    return *cfg.population.m0;
  }
  const double lo = cfg.population.init_low;
  const double hi = cfg.population.init_high;
  if (!(lo <= hi)) throw InvalidArgument("population init_low must not exceed init_high");
  rng::Stream stream(rng::derive_seed(cfg.seed, kInitStream));
  Matrix m(r, r);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = lo + (hi - lo) * stream.uniform();
  return m;
}

void fill_outcome(TrialRecord& rec, const TrialConfig& cfg, const Trajectory& traj,
                  const Matrix& m_init) {
  const Matrix& mf = traj.final_corr();
  const double eps = cfg.recovery.eps;
  rec.exact = exact_recovery(mf, eps);
  rec.permutation = permutation_recovery(mf, eps);
  rec.elimination = detect_sequential_elimination(traj, eps, cfg.recovery.eps_prime);
  rec.greedy_ordering = greedy_max_selection(init_matrix_I0(m_init, cfg.model.lambdas, cfg.model.p)).pairs;
  if (rec.permutation) {
    std::vector<std::pair<double, IndexPair>> hits;
    for (std::size_t c = 0; c < rec.permutation->sigma.size(); ++c) {
      const IndexPair pair{rec.permutation->sigma[c], static_cast<Eigen::Index>(c)};
      const double t = hitting_time(traj, pair.first, pair.second, 1.0 - eps).value_or(traj.times.back());
      hits.emplace_back(t, pair);
    }
    std::sort(hits.begin(), hits.end());
    for (const auto& h : hits) rec.recovery_ordering.push_back(h.second);
    rec.ordering_matches = rec.recovery_ordering == rec.greedy_ordering;
  }
  for (double level : cfg.recovery.thresholds) {
    std::optional<double> max_hit, all_hit;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const Matrix a = traj.corr[k].cwiseAbs();
      if (!max_hit && a.maxCoeff() >= level) max_hit = traj.times[k];
      if (!all_hit && a.colwise().maxCoeff().minCoeff() >= level) all_hit = traj.times[k];
    }
    const std::string tag = format_double(level);
    rec.hitting_times["max>=" + tag] = max_hit.value_or(std::nan(""));
    rec.hitting_times["all>=" + tag] = all_hit.value_or(std::nan(""));
  }
  switch (cfg.recovery.criterion) {
    case SuccessCriterion::Exact: rec.success = rec.exact; break;
    case SuccessCriterion::Permutation: rec.success = rec.permutation.has_value(); break;
    case SuccessCriterion::Subspace: rec.success = rec.subspace_err <= eps; break;
  }
  rec.truncated = traj.truncated;
  rec.note = traj.note;
  rec.neumann_violations = traj.neumann_violations;
  rec.route_deviation = traj.route_deviation;
}

void init_conditions(TrialRecord& rec, const TrialConfig& cfg, const StiefelPoint& x0,
                     const StiefelPoint& v) {
  rec.condition_flags["condition1"] =
      check_condition1(x0, v, cfg.conditions, cfg.condition1_sign).ok;
  if (cfg.model.p >= 3)
    rec.condition_flags["condition2"] =
        check_condition2(x0, v, cfg.model.lambdas, cfg.model.p, cfg.conditions).ok;
}

}  // namespace

const char* version() { return STPCA_VERSION; }

const char* to_string(DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::Sgd: return "sgd";
    case DynamicsKind::GradientFlow: return "gradient_flow";
    case DynamicsKind::Langevin: return "langevin";
    case DynamicsKind::Population: return "population";
  }
  return "?";
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t cell, std::size_t trial) {
  return rng::derive_seed(master, cell, trial);
}

TrialRecord run_trial(const TrialConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  TrialRecord rec;
  rec.config_hash = cfg.config_hash;
  rec.cell_id = cfg.cell_id;
  rec.seed = cfg.seed;
  rec.n = cfg.model.n;
  rec.r = cfg.model.r;
  rec.p = cfg.model.p;
  rec.lambdas = cfg.model.lambdas;
  rec.dynamics = cfg.dynamics;
  rec.budget_exponent = cfg.budget_exponent;

  std::ostringstream context;
  context << to_string(cfg.dynamics) << " trial (N=" << cfg.model.n << ", seed=" << cfg.seed
          << "): ";
  try {
    Trajectory traj;
    Matrix m_init;
    if (cfg.dynamics == DynamicsKind::Population) {
      m_init = population_start(cfg);
      IntegrateOptions opts;
      opts.dt = cfg.population.dt;
      opts.variant = cfg.population.variant;
      const std::size_t steps =
          static_cast<std::size_t>(std::ceil(cfg.population.horizon / cfg.population.dt - 1e-9));
      opts.record_every = cfg.population.record_every > 0 ? cfg.population.record_every
                                                          : default_stride(steps);
      traj = integrate_corr(m_init, cfg.model.lambdas, cfg.model.p, cfg.population.horizon, opts);
      rec.steps = steps;
      rec.subspace_err = 2.0 * (static_cast<double>(cfg.model.r) -
                                overlap_gram(CorrelationMatrix{traj.final_corr()}).gram.trace());
    } else {
      rng::Stream model_stream(rng::derive_seed(cfg.seed, kModelStream));
      SpikedModel model = make_model(cfg.model.n, cfg.model.r, cfg.model.p, cfg.model.lambdas,
                                     model_stream);
      model.signal_scale = cfg.model.signal_scale;
      rng::Stream init_stream(rng::derive_seed(cfg.seed, kInitStream));
      if (cfg.dynamics == DynamicsKind::Sgd) {
        const StiefelPoint x0 = sample_invariant(model.n, model.r, Scale::Unit, init_stream);
        SgdConfig sgd;
        sgd.delta = cfg.sgd.delta ? *cfg.sgd.delta
                                  : step_size_schedule(model.p, model.n, cfg.sgd.schedule,
                                                       cfg.sgd.schedule_params);
        sgd.steps = cfg.sgd.steps;
        sgd.grad_mode = cfg.sgd.grad_mode;
        sgd.noise = cfg.model.noise;
        sgd.record_every = cfg.sgd.record_every;
        m_init = correlation_matrix(model.v, x0).data;
        init_conditions(rec, cfg, x0, model.v);
        traj = sgd_run(model, sgd, x0, rng::derive_seed(cfg.seed, kNoiseStream));
        rec.steps = sgd.steps;
        rec.delta = sgd.delta;
        rec.subspace_err = subspace_error(*traj.final_x, model.v).frob_sq;
      } else {
        const StiefelPoint x0 = sample_invariant(model.n, model.r, Scale::SqrtN, init_stream);
        const StiefelPoint v = model.v_sqrt_n();
        const NoiseTensor w = cfg.flow.noise_enabled
                                  ? NoiseTensor::sample(model.n, model.p, cfg.model.noise,
                                                        rng::derive_seed(cfg.seed, kNoiseStream),
                                                        cfg.model.memory_budget)
                                  : NoiseTensor::zeros(model.n, model.p);
        m_init = correlation_matrix(v, x0).data;
        init_conditions(rec, cfg, x0, v);
        rec.condition_flags["condition0"] =
            check_condition0_level1(x0, w, model, cfg.flow.cfg.m_samples, cfg.flow.cfg.beta,
                                    cfg.conditions)
                .ok;
        traj = cfg.dynamics == DynamicsKind::GradientFlow
                   ? gradient_flow_run(model, w, cfg.flow.cfg, x0)
                   : langevin_run(model, w, cfg.flow.cfg, x0,
                                  rng::derive_seed(cfg.seed, kLangevinStream));
        rec.steps = cfg.flow.cfg.dt > 0.0
                        ? static_cast<std::size_t>(std::ceil(cfg.flow.cfg.horizon / cfg.flow.cfg.dt - 1e-9))
                        : 0;
        rec.delta = cfg.flow.cfg.dt;
        rec.subspace_err = subspace_error(*traj.final_x, v).frob_sq;
      }
    }
    fill_outcome(rec, cfg, traj, m_init);
    if (cfg.keep_trajectory) rec.trajectory = std::move(traj);
  } catch (const Error&) {
    rethrow_with_context(context.str());
  }
  const auto stop = std::chrono::steady_clock::now();
  rec.wall_seconds =
      cfg.deterministic ? 0.0 : std::chrono::duration<double>(stop - start).count();
  return rec;
}

std::vector<SweepCell> sweep_cells(const SweepSpec& sweep) {
  if (sweep.ns.empty()) throw InvalidArgument("sweep grid needs at least one N");
  if (sweep.trials < 1) throw InvalidArgument("sweep needs at least one trial per cell");
  if (!(sweep.budget_c > 0.0)) throw InvalidArgument("sweep budget constant must be positive");
  std::vector<SweepCell> cells;
  for (Eigen::Index n : sweep.ns) {
    const double nd = static_cast<double>(n);
    if (sweep.budget == BudgetKind::LogSquared) {
      const double l = std::log(nd);
      cells.push_back({cells.size(), n, std::nan(""),
                       static_cast<std::size_t>(std::ceil(sweep.budget_c * l * l))});
      continue;
    }
    if (sweep.alphas.empty()) throw InvalidArgument("power-law sweep needs budget exponents");
    for (double a : sweep.alphas)
      cells.push_back({cells.size(), n, a,
                       static_cast<std::size_t>(std::ceil(sweep.budget_c * std::pow(nd, a)))});
  }
  return cells;
}

double estimate_flops(const TrialConfig& base, const SweepSpec& sweep) {
  double total = 0.0;
  for (const SweepCell& cell : sweep_cells(sweep)) {
    const double per_step =
        std::pow(static_cast<double>(cell.n), base.model.p) * static_cast<double>(base.model.r);
    total += per_step * static_cast<double>(cell.steps) * static_cast<double>(sweep.trials);
  }
  return total;
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (phat + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z / (1.0 + z2 / n) * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("STPCA_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SweepSummary summarize(const std::vector<SweepCell>& cells, const std::vector<TrialRecord>& records) {
  SweepSummary out;
  out.records = records;
  for (const SweepCell& cell : cells) {
    CellSummary s;
    s.cell = cell;
    for (const TrialRecord& rec : records) {
      if (rec.cell_id != cell.cell_id) continue;
      ++s.trials;
      if (!rec.error.empty()) ++s.failures;
      else if (rec.success) ++s.successes;
    }
    s.fraction = s.trials ? static_cast<double>(s.successes) / static_cast<double>(s.trials) : 0.0;
    s.ci = wilson_interval(s.successes, s.trials);
    out.cells.push_back(s);
  }
  return out;
}

SweepSummary run_sweep(const TrialConfig& base, const SweepSpec& sweep, const SweepOptions& options) {
  if (base.dynamics == DynamicsKind::Population)
    throw InvalidArgument("sweeps run stochastic dynamics; population trials have no budget");
  const std::vector<SweepCell> cells = sweep_cells(sweep);

  // (cell, seed) -> raw row of an earlier run
  std::map<std::pair<std::size_t, std::uint64_t>, std::string> kept;
  std::map<std::pair<std::size_t, std::uint64_t>, TrialRecord> kept_records;
  if (options.resume && !options.csv_path.empty() && std::ifstream(options.csv_path).good()) {
    const CsvTable table = read_csv(options.csv_path);
    const std::vector<std::string> expected = split_csv_line(csv_header(base.model.r));
    if (table.header != expected)
      throw InvalidArgument("cannot resume: " + options.csv_path + " has a different header");
    const auto col = [&](const char* name) {
      return static_cast<std::size_t>(std::find(expected.begin(), expected.end(), name) - expected.begin());
    };
    for (std::size_t k = 0; k < table.rows.size(); ++k) {
      const auto& row = table.rows[k];
      TrialRecord rec;
      rec.cell_id = std::stoull(row[col("cell_id")]);
      rec.seed = std::stoull(row[col("seed")]);
      rec.success = row[col("success")] == "1";
      rec.exact = row[col("exact")] == "1";
      rec.error = row[col("error")];
      const auto key = std::make_pair(rec.cell_id, rec.seed);
      kept[key] = table.raw_rows[k];
      kept_records[key] = rec;
    }
  }

  struct Job {
    SweepCell cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  std::size_t skipped = 0;
  for (const SweepCell& cell : cells)
    for (std::size_t t = 0; t < sweep.trials; ++t) {
      const std::uint64_t seed = trial_seed(sweep.master_seed, cell.cell_id, t);
      if (kept.count({cell.cell_id, seed})) {
        ++skipped;
        continue;
      }
      jobs.push_back({cell, seed});
    }

  std::vector<TrialRecord> fresh(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      TrialConfig cfg = base;
      cfg.model.n = jobs[k].cell.n;
      cfg.seed = jobs[k].seed;
      cfg.cell_id = jobs[k].cell.cell_id;
      cfg.budget_exponent = jobs[k].cell.alpha;
      cfg.deterministic = options.deterministic || base.deterministic;
      cfg.keep_trajectory = false;
      if (cfg.dynamics == DynamicsKind::Sgd) cfg.sgd.steps = jobs[k].cell.steps;
      else cfg.flow.cfg.m_samples = static_cast<double>(jobs[k].cell.steps);
      try {
        fresh[k] = run_trial(cfg);
      } catch (const std::exception& e) {
        TrialRecord rec;
        rec.config_hash = cfg.config_hash;
        rec.cell_id = cfg.cell_id;
        rec.seed = cfg.seed;
        rec.n = cfg.model.n;
        rec.r = cfg.model.r;
        rec.p = cfg.model.p;
        rec.lambdas = cfg.model.lambdas;
        rec.dynamics = cfg.dynamics;
        rec.budget_exponent = cfg.budget_exponent;
        rec.steps = jobs[k].cell.steps;
        rec.error = e.what();
        fresh[k] = std::move(rec);
      }
    }
  };
  const std::size_t n_workers = std::min(worker_count(sweep.workers), std::max<std::size_t>(1, jobs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Merge in (cell_id, seed) order.
  std::vector<std::pair<std::pair<std::size_t, std::uint64_t>, std::string>> rows;
  std::vector<TrialRecord> all;
  for (auto& [key, rec] : kept_records) {
    rows.emplace_back(key, kept[key]);
    all.push_back(rec);
  }
  for (auto& rec : fresh) {
    rows.emplace_back(std::make_pair(rec.cell_id, rec.seed), csv_row(rec));
    all.push_back(std::move(rec));
  }
  std::sort(rows.begin(), rows.end());
  std::sort(all.begin(), all.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.cell_id, a.seed) < std::tie(b.cell_id, b.seed);
  });
  if (!options.csv_path.empty()) {
    std::ofstream out(options.csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + options.csv_path);
    out << csv_header(base.model.r) << '\n';
    for (const auto& row : rows) out << row.second << '\n';
  }
  SweepSummary summary = summarize(cells, all);
  summary.skipped = skipped;
  return summary;
}

ThresholdEstimate estimate_threshold(const std::vector<CellSummary>& cells) {
  ThresholdEstimate est;
  std::map<Eigen::Index, std::vector<const CellSummary*>> by_n;
  for (const CellSummary& c : cells) by_n[c.cell.n].push_back(&c);
  std::vector<std::pair<double, double>> points;  // (log N, alpha0)
  for (auto& [n, group] : by_n) {
    std::sort(group.begin(), group.end(),
              [](const CellSummary* a, const CellSummary* b) { return a->cell.alpha < b->cell.alpha; });
    ThresholdFit fit;
    fit.n = n;
    std::set<double> distinct;
    for (const CellSummary* c : group)
      if (std::isfinite(c->cell.alpha) && c->trials > 0) distinct.insert(c->cell.alpha);
    if (distinct.size() < 3) {
      fit.flag = "insufficient";
      est.reliable = false;
      est.per_n.push_back(fit);
      continue;
    }
    const double lo = group.front()->cell.alpha;
    const double hi = group.back()->cell.alpha;
    std::size_t succ = 0, tot = 0;
    for (const CellSummary* c : group) {
      succ += c->successes;
      tot += c->trials;
    }
    if (succ == tot) {
      fit.flag = "below_grid";
      fit.alpha0 = lo;
      fit.alpha0_ci = {-std::numeric_limits<double>::infinity(), lo};
      est.per_n.push_back(fit);
      continue;
    }
    if (succ == 0) {
      fit.flag = "above_grid";
      fit.alpha0 = hi;
      fit.alpha0_ci = {hi, std::numeric_limits<double>::infinity()};
      est.per_n.push_back(fit);
      continue;
    }
    bool monotone = true;
    for (std::size_t a = 0; a < group.size(); ++a)
      for (std::size_t b = a + 1; b < group.size(); ++b)
        if (group[a]->cell.alpha < group[b]->cell.alpha && group[a]->ci.lower > group[b]->ci.upper)
          monotone = false;

    // Maximum likelihood over a grid in (alpha0, k), k >= 0 keeps the fit monotone.
    const double span = hi - lo;
    const int n_alpha = 2001;
    std::vector<double> profile(n_alpha, -std::numeric_limits<double>::infinity());
    std::vector<double> best_k(n_alpha, 0.0);
    for (int ia = 0; ia < n_alpha; ++ia) {
      const double a0 = lo - 0.5 * span + 2.0 * span * ia / (n_alpha - 1);
      for (int ik = 0; ik <= 80; ++ik) {
        const double k = 0.1 * std::pow(10.0, 4.0 * ik / 80.0) / std::max(span, 1e-12);
        double ll = 0.0;
        for (const CellSummary* c : group) {
          double q = 1.0 / (1.0 + std::exp(-k * (c->cell.alpha - a0)));
          q = std::clamp(q, 1e-12, 1.0 - 1e-12);
          ll += c->successes * std::log(q) + (c->trials - c->successes) * std::log(1.0 - q);
        }
        if (ll > profile[ia]) {
          profile[ia] = ll;
          best_k[ia] = k;
        }
      }
    }
    const double best = *std::max_element(profile.begin(), profile.end());
    int first = -1, last = -1, ci_first = -1, ci_last = -1;
    for (int ia = 0; ia < n_alpha; ++ia) {
      if (profile[ia] >= best - 1e-9) {
        if (first < 0) first = ia;
        last = ia;
      }
      if (profile[ia] >= best - 1.92) {
        if (ci_first < 0) ci_first = ia;
        ci_last = ia;
      }
    }
    const auto grid = [&](int ia) { return lo - 0.5 * span + 2.0 * span * ia / (n_alpha - 1); };
    fit.alpha0 = 0.5 * (grid(first) + grid(last));
    fit.alpha0_ci = {grid(ci_first), grid(ci_last)};
    fit.slope = best_k[(first + last) / 2];
    if (!monotone) {
      fit.flag = "unreliable";
      est.reliable = false;
    } else {
      points.emplace_back(std::log(static_cast<double>(n)), fit.alpha0);
    }
    est.per_n.push_back(fit);
  }
  if (points.size() >= 2) {
    double mx = 0, my = 0;
    for (auto& [x, y] : points) {
      mx += x;
      my += y;
    }
    mx /= points.size();
    my /= points.size();
    double sxy = 0, sxx = 0;
    for (auto& [x, y] : points) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
    }
    if (sxx > 0) est.slope_vs_log_n = sxy / sxx;
  }
  return est;
}

std::string csv_header(Eigen::Index r) {
  std::string h =
      "cell_id,N,r,p,lambda_csv,dynamics,budget_exponent,steps,delta,seed,exact,permutation_sigma,"
      "elim_ok";
  for (Eigen::Index k = 1; k <= r; ++k) h += ",T" + std::to_string(k);
  h += ",subspace_err,neumann_violations,wall_seconds,success,order_ok,config_hash,version,error";
  return h;
}

std::string csv_row(const TrialRecord& rec) {
  std::ostringstream os;
  std::string lambdas;
  for (Eigen::Index i = 0; i < rec.lambdas.size(); ++i) {
    if (i) lambdas += ';';
    lambdas += format_double(rec.lambdas(i));
  }
  std::string sigma;
  if (rec.permutation)
    for (std::size_t i = 0; i < rec.permutation->sigma.size(); ++i) {
      if (i) sigma += ';';
      sigma += std::to_string(rec.permutation->sigma[i] + 1);
    }
  os << rec.cell_id << ',' << rec.n << ',' << rec.r << ',' << rec.p << ',' << lambdas << ','
     << to_string(rec.dynamics) << ',' << csv_number(rec.budget_exponent) << ',' << rec.steps
     << ',' << csv_number(rec.delta) << ',' << rec.seed << ',' << (rec.exact ? 1 : 0) << ','
     << sigma << ',' << (rec.elimination.satisfied ? 1 : 0);
  for (Eigen::Index k = 0; k < rec.r; ++k) {
    os << ',';
    if (static_cast<std::size_t>(k) < rec.elimination.stop_times.size())
      os << format_double(rec.elimination.stop_times[k]);
  }
  os << ',' << csv_number(rec.subspace_err) << ',' << rec.neumann_violations << ','
     << format_double(rec.wall_seconds) << ',' << (rec.success ? 1 : 0) << ','
     << (rec.ordering_matches ? 1 : 0) << ',' << rec.config_hash << ',' << version() << ','
     << csv_field(rec.error);
  return os.str();
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) return table;
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.header.size())
      throw InvalidArgument(path + ": row has " + std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
    table.raw_rows.push_back(line);
  }
  return table;
}

std::string trial_json(const TrialRecord& rec) {
  std::ostringstream os;
  const auto pairs_json = [](const std::vector<IndexPair>& pairs) {
    std::string s = "[";
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (k) s += ",";
      s += "[" + std::to_string(pairs[k].first + 1) + "," + std::to_string(pairs[k].second + 1) + "]";
    }
    return s + "]";
  };
  os << "{\"meta\":{";
  os << "\"config_hash\":" << json_string(rec.config_hash) << ",\"version\":" << json_string(version())
     << ",\"dynamics\":" << json_string(to_string(rec.dynamics)) << ",\"seed\":" << rec.seed
     << ",\"cell_id\":" << rec.cell_id << ",\"N\":" << rec.n << ",\"r\":" << rec.r
     << ",\"p\":" << rec.p << ",\"lambda\":[";
  for (Eigen::Index i = 0; i < rec.lambdas.size(); ++i)
    os << (i ? "," : "") << json_number(rec.lambdas(i));
  os << "],\"steps\":" << rec.steps << ",\"delta\":" << json_number(rec.delta)
     << ",\"exact_recovery\":" << (rec.exact ? "true" : "false")
     << ",\"success\":" << (rec.success ? "true" : "false") << ",\"permutation\":";
  if (rec.permutation) {
    os << "{\"sigma\":[";
    for (std::size_t i = 0; i < rec.permutation->sigma.size(); ++i)
      os << (i ? "," : "") << rec.permutation->sigma[i] + 1;
    os << "],\"signs\":[";
    for (std::size_t i = 0; i < rec.permutation->signs.size(); ++i)
      os << (i ? "," : "") << rec.permutation->signs[i];
    os << "]}";
  } else {
    os << "null";
  }
  os << ",\"elimination\":{\"satisfied\":" << (rec.elimination.satisfied ? "true" : "false")
     << ",\"ordering\":" << pairs_json(rec.elimination.ordering) << ",\"stop_times\":[";
  for (std::size_t k = 0; k < rec.elimination.stop_times.size(); ++k)
    os << (k ? "," : "") << json_number(rec.elimination.stop_times[k]);
  os << "],\"stride\":" << rec.elimination.stride << ",\"violations\":[";
  for (std::size_t k = 0; k < rec.elimination.violations.size(); ++k)
    os << (k ? "," : "") << json_string(rec.elimination.violations[k]);
  os << "]},\"greedy_ordering\":" << pairs_json(rec.greedy_ordering)
     << ",\"recovery_ordering\":" << pairs_json(rec.recovery_ordering)
     << ",\"ordering_matches\":" << (rec.ordering_matches ? "true" : "false")
     << ",\"hitting_times\":{";
  bool first = true;
  for (const auto& [name, t] : rec.hitting_times) {
    os << (first ? "" : ",") << json_string(name) << ":" << json_number(t);
    first = false;
  }
  os << "},\"conditions\":{";
  first = true;
  for (const auto& [name, ok] : rec.condition_flags) {
    os << (first ? "" : ",") << json_string(name) << ":" << (ok ? "true" : "false");
    first = false;
  }
  os << "},\"subspace_err\":" << json_number(rec.subspace_err)
     << ",\"neumann_violations\":" << rec.neumann_violations
     << ",\"route_deviation\":" << json_number(rec.route_deviation)
     << ",\"wall_seconds\":" << json_number(rec.wall_seconds)
     << ",\"truncated\":" << (rec.truncated ? "true" : "false") << ",\"note\":" << json_string(rec.note)
     << ",\"error\":" << json_string(rec.error) << "}";
  if (rec.trajectory) {
    const Trajectory& tr = *rec.trajectory;
    os << ",\"times\":[";
    for (std::size_t k = 0; k < tr.size(); ++k) os << (k ? "," : "") << json_number(tr.times[k]);
    os << "],\"corr\":[";
    for (std::size_t k = 0; k < tr.size(); ++k) {
      os << (k ? "," : "") << "[";
      const Matrix& m = tr.corr[k];
      bool f = true;
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          os << (f ? "" : ",") << json_number(m(i, j));
          f = false;
        }
      os << "]";
    }
    os << "],\"gram_eigs\":[";
    for (std::size_t k = 0; k < tr.size(); ++k) {
      os << (k ? "," : "") << "[";
      for (Eigen::Index i = 0; i < tr.gram_eigs[k].size(); ++i)
        os << (i ? "," : "") << json_number(tr.gram_eigs[k](i));
      os << "]";
    }
    os << "]";
  }
  os << "}";
  return os.str();
}

std::string threshold_json(const ThresholdEstimate& est, const std::string& config_hash) {
  std::ostringstream os;
  os << "{\"meta\":{\"config_hash\":" << json_string(config_hash)
     << ",\"version\":" << json_string(version()) << "},\"reliable\":" << (est.reliable ? "true" : "false")
     << ",\"slope_vs_log_n\":" << json_number(est.slope_vs_log_n) << ",\"per_n\":[";
  for (std::size_t k = 0; k < est.per_n.size(); ++k) {
    const ThresholdFit& f = est.per_n[k];
    os << (k ? "," : "") << "{\"N\":" << f.n << ",\"alpha0\":" << json_number(f.alpha0)
       << ",\"ci\":[" << json_number(f.alpha0_ci.lower) << "," << json_number(f.alpha0_ci.upper)
       << "],\"logistic_slope\":" << json_number(f.slope) << ",\"flag\":" << json_string(f.flag) << "}";
  }
  os << "]}";
  return os.str();
}

}  // namespace stpca
