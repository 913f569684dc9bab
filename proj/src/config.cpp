#include "stpca/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "stpca/errors.hpp"

namespace stpca {

namespace {

namespace pt = boost::property_tree;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  const std::string& text(const std::string& key) const { return values_.at(key); }

  double real(const std::string& key) const {
    const std::string s = lower(text(key));
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
      throw ConfigError(key + ": expected a number, got '" + text(key) + "'");
    return v;
  }

  std::optional<double> real_or_auto(const std::string& key) const {
    if (lower(text(key)) == "auto") return std::nullopt;
    return real(key);
  }

  std::uint64_t count(const std::string& key) const {
    const std::string& s = text(key);
    std::uint64_t v = 0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != end)
      throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string s = lower(text(key));
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + text(key) + "'");
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& part : split(text(key), ',')) {
      Reader one(std::map<std::string, std::string>{{key, part}});
      out.push_back(one.real(key));
    }
    return out;
  }

  template <typename E>
  E choice(const std::string& key, const std::vector<std::pair<std::string, E>>& options) const {
    const std::string s = lower(text(key));
    std::string names;
    for (const auto& [name, value] : options) {
      if (s == name) return value;
      names += (names.empty() ? "" : ", ") + name;
    }
    throw ConfigError(key + ": '" + text(key) + "' is not one of " + names);
  }

 private:
  std::map<std::string, std::string> values_;
};

RunConfig build(const Reader& in) {
  RunConfig out;
  TrialConfig& t = out.trial;

  // [model]
  t.model.n = static_cast<Eigen::Index>(in.count("model.N"));
  t.model.r = static_cast<Eigen::Index>(in.count("model.r"));
  t.model.p = static_cast<int>(in.count("model.p"));
  std::vector<double> lambdas = in.reals("model.lambda");
  if (lambdas.size() == 1 && t.model.r > 1) lambdas.assign(static_cast<std::size_t>(t.model.r), lambdas[0]);
  if (static_cast<Eigen::Index>(lambdas.size()) != t.model.r)
    throw ConfigError("model.lambda: expected " + std::to_string(t.model.r) + " values");
  t.model.lambdas = Eigen::Map<Vector>(lambdas.data(), static_cast<Eigen::Index>(lambdas.size()));
  t.model.noise.dist = in.choice<NoiseDist>(
      "model.noise", {{"gaussian", NoiseDist::Gaussian}, {"rademacher", NoiseDist::Rademacher}});
  t.model.noise.sigma = in.real("model.sigma");
  t.model.signal_scale = in.real("model.signal");
  t.model.memory_budget = in.count("model.memory_budget");

  // [dynamics]
  t.dynamics = in.choice<DynamicsKind>("dynamics.kind", {{"sgd", DynamicsKind::Sgd},
                                                         {"gradient_flow", DynamicsKind::GradientFlow},
                                                         {"gf", DynamicsKind::GradientFlow},
                                                         {"langevin", DynamicsKind::Langevin},
                                                         {"population", DynamicsKind::Population}});
  const std::size_t steps = in.count("dynamics.steps");
  t.sgd.steps = steps;
  t.sgd.delta = in.real_or_auto("dynamics.delta");
  t.sgd.schedule = in.choice<ScheduleRegime>(
      "dynamics.schedule", {{"tensor", ScheduleRegime::TensorP3plus},
                            {"matrix_separated", ScheduleRegime::MatrixSeparated},
                            {"matrix_isotropic_max", ScheduleRegime::MatrixIsotropicMax},
                            {"matrix_isotropic_min", ScheduleRegime::MatrixIsotropicMin}});
  t.sgd.schedule_params.c_delta = in.real("dynamics.c_delta");
  t.sgd.schedule_params.d0 = in.real_or_auto("dynamics.d0");
  t.sgd.schedule_params.eps = in.real("dynamics.schedule_eps");
  t.sgd.schedule_params.gamma2 = in.real("dynamics.schedule_gamma2");
  const GradMode grad_mode = in.choice<GradMode>(
      "dynamics.grad_mode", {{"exact", GradMode::Exact}, {"first_mode", GradMode::FirstMode}});
  t.sgd.grad_mode = grad_mode;
  t.sgd.record_every = in.count("dynamics.record_every");
  t.flow.cfg.grad_mode = grad_mode;
  t.flow.cfg.record_every = t.sgd.record_every;
  t.flow.cfg.dt = in.real("dynamics.dt");
  const std::optional<double> horizon = in.real_or_auto("dynamics.horizon");
  t.flow.cfg.horizon = horizon ? *horizon : static_cast<double>(steps) * t.flow.cfg.dt;
  t.flow.cfg.beta = in.real("dynamics.beta");
  t.flow.cfg.m_samples = in.real("dynamics.M");
  t.flow.cfg.rescale_time = in.flag("dynamics.rescale_time");
  t.flow.noise_enabled = in.flag("dynamics.noise_enabled");

  // [population]
  const std::string m0 = lower(in.text("population.m0"));
  if (m0 != "random") {
    const std::vector<double> entries = in.reals("population.m0");
    const Eigen::Index r = t.model.r;
    Matrix m(r, r);
    if (entries.size() == 1) {
      m.setConstant(entries[0]);
    } else if (static_cast<Eigen::Index>(entries.size()) == r * r) {
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j) m(i, j) = entries[static_cast<std::size_t>(i * r + j)];
    } else {
      throw ConfigError("population.m0: expected 1 or r*r values, or 'random'");
    }
    t.population.m0 = m;
  }
  t.population.init_low = in.real("population.init_low");
  t.population.init_high = in.real("population.init_high");
  t.population.horizon = in.real("population.horizon");
  t.population.dt = in.real("population.dt");
  t.population.record_every = in.count("population.record_every");
  t.population.variant = in.choice<CorrVariant>(
      "population.variant", {{"full", CorrVariant::Full}, {"drift_only", CorrVariant::DriftOnly}});

  // [recovery]
  t.recovery.eps = in.real("recovery.eps");
  t.recovery.eps_prime = in.real("recovery.eps_prime");
  t.recovery.criterion = in.choice<SuccessCriterion>(
      "recovery.criterion", {{"exact", SuccessCriterion::Exact},
                             {"permutation", SuccessCriterion::Permutation},
                             {"subspace", SuccessCriterion::Subspace}});
  t.recovery.thresholds = in.reals("recovery.thresholds");

  // [conditions]
  t.conditions.gamma0 = in.real("conditions.gamma0");
  t.conditions.gamma1 = in.real("conditions.gamma1");
  t.conditions.gamma2 = in.real("conditions.gamma2");
  t.conditions.gamma = in.real("conditions.gamma");
  t.condition1_sign = in.choice<SignMode>(
      "conditions.sign", {{"absolute", SignMode::Absolute}, {"signed", SignMode::Signed}});

  // [sweep]
  out.sweep.ns.clear();
  for (double n : in.reals("sweep.N")) {
    if (n < 1 || n != std::floor(n)) throw ConfigError("sweep.N: expected positive integers");
    out.sweep.ns.push_back(static_cast<Eigen::Index>(n));
  }
  out.sweep.alphas = in.reals("sweep.alpha");
  out.sweep.budget = in.choice<BudgetKind>(
      "sweep.budget", {{"power", BudgetKind::Power}, {"log_squared", BudgetKind::LogSquared}});
  out.sweep.budget_c = in.real("sweep.budget_c");
  out.sweep.trials = in.count("sweep.trials");
  out.sweep.master_seed = in.count("sweep.seed");
  out.sweep.workers = in.count("sweep.workers");
  out.sweep.flop_limit = in.real("sweep.flop_limit");
  t.seed = out.sweep.master_seed;

  // [output] [check]
  out.output.dir = in.text("output.dir");
  out.output.trajectories = in.flag("output.trajectories");
  t.keep_trajectory = out.output.trajectories;
  out.check.samples = in.count("check.samples");
  return out;
}

RunConfig finish(const pt::ptree& tree, const std::vector<std::string>& overrides) {
  const auto& defaults = config_defaults();
  std::map<std::string, std::string> values = defaults;
  std::set<std::string> explicit_keys;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [key, leaf] : body) {
      const std::string dotted = section + "." + key;
      if (!defaults.count(dotted)) throw ConfigError("unknown config key '" + dotted + "'");
      values[dotted] = leaf.data();
      explicit_keys.insert(dotted);
    }
  }

  std::vector<std::string> notices;
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + item + "' is not key=value");
    const std::string key = split(item.substr(0, eq), '\n').front();
    const std::string value = split(item.substr(eq + 1), '\n').front();
    if (!defaults.count(key)) throw ConfigError("unknown config key '" + key + "' in override");
    if (explicit_keys.count(key))
      notices.push_back("override " + key + ": '" + values[key] + "' -> '" + value + "'");
    values[key] = value;
    explicit_keys.insert(key);
  }

  RunConfig out = build(Reader(values));
  std::string canonical;
  for (const auto& [key, value] : values) canonical += key + "=" + value + "\n";
  out.canonical = canonical;
  out.hash = fnv1a_hex(canonical);
  out.notices = std::move(notices);
  out.trial.config_hash = out.hash;
  return out;
}

}  // namespace

const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> defaults{
      {"model.N", "32"},
      {"model.r", "1"},
      {"model.p", "3"},
      {"model.lambda", "1"},
      {"model.noise", "gaussian"},
      {"model.sigma", "1"},
      {"model.signal", "1"},
      {"model.memory_budget", std::to_string(kDefaultMemoryBudget)},
      {"dynamics.kind", "sgd"},
      {"dynamics.steps", "1000"},
      {"dynamics.delta", "auto"},
      {"dynamics.schedule", "tensor"},
      {"dynamics.c_delta", "1"},
      {"dynamics.d0", "auto"},
      {"dynamics.schedule_eps", "1"},
      {"dynamics.schedule_gamma2", "1"},
      {"dynamics.grad_mode", "exact"},
      {"dynamics.record_every", "0"},
      {"dynamics.dt", "0.001"},
      {"dynamics.horizon", "auto"},
      {"dynamics.beta", "inf"},
      {"dynamics.M", "1"},
      {"dynamics.rescale_time", "false"},
      {"dynamics.noise_enabled", "true"},
      {"population.m0", "random"},
      {"population.init_low", "0.005"},
      {"population.init_high", "0.015"},
      {"population.horizon", "10"},
      {"population.dt", "0.001"},
      {"population.record_every", "0"},
      {"population.variant", "full"},
      {"recovery.eps", "0.1"},
      {"recovery.eps_prime", "0.1"},
      {"recovery.criterion", "permutation"},
      {"recovery.thresholds", "0.5,0.9"},
      {"conditions.gamma0", "1"},
      {"conditions.gamma1", "3"},
      {"conditions.gamma2", "0.05"},
      {"conditions.gamma", "0.1"},
      {"conditions.sign", "absolute"},
      {"sweep.N", "16"},
      {"sweep.alpha", "1"},
      {"sweep.budget", "power"},
      {"sweep.budget_c", "1"},
      {"sweep.trials", "10"},
      {"sweep.seed", "1"},
      {"sweep.workers", "0"},
      {"sweep.flop_limit", "1e12"},
      {"output.dir", "out"},
      {"output.trajectories", "false"},
      {"check.samples", "100"},
  };
  return defaults;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return finish(tree, overrides);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace stpca
