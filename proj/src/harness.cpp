#include "oasis/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

namespace oasis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPosInf = std::numeric_limits<double>::infinity();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE)
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), [](unsigned char c) {
        return std::isdigit(c);
      }))
    throw ConfigError(key + ": expected a non-negative integer, got '" + text +
                      "'");
  errno = 0;
  const unsigned long long v = std::strtoull(text.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ConfigError(key + ": integer out of range");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

// "0,1,2" or "0..9" (inclusive).
std::vector<std::uint64_t> to_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto lo = to_uint("seeds", trim(text.substr(0, dots)));
    const auto hi = to_uint("seeds", trim(text.substr(dots + 2)));
    if (hi < lo) throw ConfigError("seeds: empty range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(to_uint("seeds", trim(tok)));
  return out;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

bool is_oasis(const std::string& method) {
  return method.rfind("oasis-", 0) == 0;
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{
      "oasis-adaptive", "oasis-fixed", "oasis-momentum", "oasis-linesearch",
      "sgd",           "adagrad",     "rmsprop",        "adam",
      "adamw",         "adahessian",  "adgd"};
  return m;
}

double default_eta(const std::string& method) {
  if (method == "oasis-adaptive" || method == "adgd") return 1e-4;
  if (method == "oasis-fixed" || method == "oasis-momentum") return 0.1;
  if (method == "oasis-linesearch") return 1.0;
  if (method == "sgd") return 0.1;
  if (method == "adahessian") return 0.15;
  if (method == "adagrad") return 0.01;
  return 1e-3;  // adam, adamw, rmsprop
}

double default_beta1(const std::string& method) {
  if (method == "adam" || method == "adamw" || method == "adahessian" ||
      method == "oasis-momentum")
    return 0.9;
  return 0.0;
}

double default_beta2(const std::string& method) {
  return is_oasis(method) ? 0.99 : 0.999;
}

BaselineKind baseline_kind(const std::string& method) {
  if (method == "sgd") return BaselineKind::sgd;
  if (method == "adagrad") return BaselineKind::adagrad;
  if (method == "rmsprop") return BaselineKind::rmsprop;
  if (method == "adam") return BaselineKind::adam;
  if (method == "adamw") return BaselineKind::adamw;
  if (method == "adahessian") return BaselineKind::adahessian;
  if (method == "adgd") return BaselineKind::adgd;
  throw ConfigError("unknown method '" + method + "'");
}

StepRule step_rule(const std::string& method) {
  if (method == "oasis-adaptive") return StepRule::adaptive;
  if (method == "oasis-fixed") return StepRule::fixed;
  if (method == "oasis-momentum") return StepRule::momentum;
  if (method == "oasis-linesearch") return StepRule::linesearch;
  throw ConfigError("unknown method '" + method + "'");
}

// Conjugate gradients on H p = -g, stopping at ||r|| <= tol.
DenseVector newton_direction(const Objective& problem,
                             std::span<const double> w,
                             std::span<const double> g, double tol) {
  const std::size_t d = g.size();
  DenseVector p(d, 0.0);
  DenseVector r = scaled(-1.0, g);
  DenseVector s = r;
  double rr = squared_norm(r);
  for (std::size_t it = 0; it < 10 * d + 10 && std::sqrt(rr) > tol; ++it) {
    const DenseVector hs = problem.hvp(w, s);
    const double shs = dot(s, hs);
    if (!(shs > 0.0)) break;
    const double a = rr / shs;
    axpy(a, s, p);
    axpy(-a, hs, r);
    const double rr_next = squared_norm(r);
    for (std::size_t i = 0; i < d; ++i) s[i] = r[i] + (rr_next / rr) * s[i];
    rr = rr_next;
  }
  if (squared_norm(p) == 0.0) p = scaled(-1.0, g);
  return p;
}

RunRow measure(const ProblemInstance& inst,
               const std::optional<ReferenceSolution>& ref, std::uint64_t seed,
               std::size_t k, double passes, std::span<const double> w) {
  RunRow row;
  row.seed = seed;
  row.k = k;
  row.effective_passes = passes;
  row.loss = inst.objective->value(w);
  row.optimality_gap = ref ? row.loss - ref->f : kNaN;
  row.grad_norm_sq = squared_norm(inst.objective->gradient(w));
  row.test_accuracy = inst.test.rows() > 0
                          ? classification_accuracy(inst.test.x, inst.test.y, w)
                          : kNaN;
  row.eta = kNaN;
  row.dhat_min = kNaN;
  row.dhat_max = kNaN;
  row.psi = kNaN;
  return row;
}

RunRecord run_seed(const ExperimentConfig& config, const ProblemInstance& inst,
                   const std::optional<ReferenceSolution>& ref,
                   std::uint64_t seed) {
  RunRecord rec;
  rec.seed = seed;
  rec.method = config.method;
  const Objective& problem = *inst.objective;
  const Rng master(seed);
  Rng init_rng = master.fork(1);
  DenseVector w0 = scaled(0.01, standard_normal(problem.dim(), init_rng));
  auto opt = make_optimizer(config, std::move(w0), master.fork(2));
  const bool adaptive_oasis = config.method == "oasis-adaptive";

  rec.rows.push_back(measure(inst, ref, seed, 0, 0.0, opt->weights()));
  const bool stochastic =
      config.batch_size > 0 && config.batch_size < problem.n_samples();
  const std::size_t epoch_len =
      stochastic ? (problem.n_samples() + config.batch_size - 1) /
                       config.batch_size
                 : 1;
  auto done = [&](const RunRow& row) {
    return opt->passes() >= config.max_passes ||
           (config.grad_tol > 0.0 && row.grad_norm_sq <= config.grad_tol);
  };
  if (done(rec.rows.back())) return rec;

  try {
    std::size_t steps = 0;
    while (true) {
      const DenseVector w_before = opt->weights();
      const double f_before =
          adaptive_oasis && ref ? problem.value(w_before) : kNaN;
      const StepReport rep = opt->step(problem);
      ++steps;
      const bool boundary = steps % epoch_len == 0;
      const bool finished = opt->passes() >= config.max_passes;
      if (!boundary && !finished) continue;

      RunRow row =
          measure(inst, ref, seed, opt->iteration(), opt->passes(), opt->weights());
      row.eta = rep.eta;
      row.dhat_min = rep.dhat_min;
      row.dhat_max = rep.dhat_max;
      if (adaptive_oasis && ref && rep.theta && epoch_len == 1)
        row.psi = lyapunov_psi(opt->weights(), w_before, ref->w, opt->scaling(),
                               rep.eta, *rep.theta, f_before, ref->f);
      rec.rows.push_back(row);
      if (done(row)) break;
      if (boundary && stochastic) {
        const double mult = config.schedule.multiplier_at(steps / epoch_len);
        if (mult != 1.0) opt->scale_step_size(mult);
      }
    }
  } catch (const std::runtime_error& e) {
    rec.aborted = true;
    rec.abort_message = e.what();
  }
  return rec;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "dataset") {
    dataset = value;
  } else if (key == "test_dataset") {
    test_dataset = value;
  } else if (key == "train_fraction") {
    train_fraction = to_double(key, value);
  } else if (key == "synth_n") {
    synth_n = to_uint(key, value);
  } else if (key == "synth_d") {
    synth_d = to_uint(key, value);
  } else if (key == "synth_sparsity") {
    synth_sparsity = to_double(key, value);
  } else if (key == "synth_separation") {
    synth_separation = to_double(key, value);
  } else if (key == "data_seed") {
    data_seed = to_uint(key, value);
  } else if (key == "loss") {
    if (value == "logistic")
      loss = LossKind::logistic;
    else if (value == "nls")
      loss = LossKind::nls;
    else
      throw ConfigError("loss: expected logistic or nls, got '" + value + "'");
  } else if (key == "lambda") {
    const auto slash = value.find('/');
    if (slash != std::string::npos) {
      if (trim(value.substr(slash + 1)) != "n")
        throw ConfigError("lambda: expected <number> or <number>/n");
      lambda = to_double(key, trim(value.substr(0, slash)));
      lambda_per_n = true;
    } else {
      lambda = to_double(key, value);
      lambda_per_n = false;
    }
  } else if (key == "nls_half") {
    nls_half = to_bool(key, value);
  } else if (key == "method") {
    method = value;
  } else if (key == "eta") {
    eta = to_double(key, value);
  } else if (key == "beta1") {
    beta1 = to_double(key, value);
  } else if (key == "beta2") {
    beta2 = to_double(key, value);
  } else if (key == "alpha") {
    alpha = to_double(key, value);
  } else if (key == "gamma") {
    gamma = to_double(key, value);
  } else if (key == "optimistic") {
    optimistic = to_bool(key, value);
  } else if (key == "warmstart") {
    warmstart = to_uint(key, value);
  } else if (key == "eps") {
    eps = to_double(key, value);
  } else if (key == "weight_decay") {
    weight_decay = to_double(key, value);
  } else if (key == "batch_size") {
    batch_size = to_uint(key, value);
  } else if (key == "schedule") {
    try {
      schedule = ScheduleSpec::parse(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
  } else if (key == "c1") {
    c1 = to_double(key, value);
  } else if (key == "tau") {
    tau = to_double(key, value);
  } else if (key == "max_passes") {
    max_passes = to_double(key, value);
  } else if (key == "seeds") {
    seeds = to_seeds(value);
  } else if (key == "seed_count") {
    const auto n = to_uint(key, value);
    seeds.clear();
    for (std::uint64_t s = 0; s < n; ++s) seeds.push_back(s);
  } else if (key == "grad_tol") {
    grad_tol = to_double(key, value);
  } else if (key == "out_dir") {
    out_dir = value;
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "train_fraction must lie in (0, 1)");
  if (dataset.empty()) {
    require(synth_n >= 2, "synth_n must be >= 2");
    require(synth_d >= 1, "synth_d must be >= 1");
    require(synth_sparsity > 0.0 && synth_sparsity <= 1.0,
            "synth_sparsity must lie in (0, 1]");
    require(synth_separation >= 0.0 && std::isfinite(synth_separation),
            "synth_separation must be >= 0");
  }
  require(!(test_dataset.size() && dataset.empty()),
          "test_dataset needs dataset");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be >= 0");
  require(std::find(known_methods().begin(), known_methods().end(), method) !=
              known_methods().end(),
          "unknown method '" + method + "'");
  require(!eta || (*eta > 0.0 && std::isfinite(*eta)), "eta must be > 0");
  require(!beta1 || (*beta1 >= 0.0 && *beta1 < 1.0),
          "beta1 must lie in [0, 1)");
  if (is_oasis(method)) {
    require(!beta2 || (*beta2 >= 0.0 && *beta2 <= 1.0),
            "beta2 must lie in [0, 1]");
    require(warmstart > 0 || beta2.value_or(0.99) < 1.0,
            "bias-corrected start (warmstart = 0) needs beta2 < 1");
  } else {
    require(!beta2 || (*beta2 >= 0.0 && *beta2 < 1.0),
            "beta2 must lie in [0, 1)");
  }
  require(alpha > 0.0, "alpha must be > 0");
  require(gamma > 0.0, "gamma must be > 0");
  require(eps >= 0.0, "eps must be >= 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(c1 > 0.0 && c1 < 1.0, "c1 must lie in (0, 1)");
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
  require(max_passes >= 0.0 && std::isfinite(max_passes),
          "max_passes must be >= 0");
  require(!seeds.empty(), "seed list must be non-empty");
  require(grad_tol >= 0.0, "grad_tol must be >= 0");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  if (!dataset.empty()) line("dataset", dataset);
  if (!test_dataset.empty()) line("test_dataset", test_dataset);
  line("train_fraction", num(train_fraction));
  line("synth_n", std::to_string(synth_n));
  line("synth_d", std::to_string(synth_d));
  line("synth_sparsity", num(synth_sparsity));
  line("synth_separation", num(synth_separation));
  line("data_seed", std::to_string(data_seed));
  line("loss", loss == LossKind::logistic ? "logistic" : "nls");
  line("lambda", lambda_per_n ? num(lambda) + "/n" : num(lambda));
  line("nls_half", nls_half ? "true" : "false");
  line("method", method);
  if (eta) line("eta", num(*eta));
  if (beta1) line("beta1", num(*beta1));
  if (beta2) line("beta2", num(*beta2));
  line("alpha", num(alpha));
  line("gamma", num(gamma));
  line("optimistic", optimistic ? "true" : "false");
  line("warmstart", std::to_string(warmstart));
  line("eps", num(eps));
  line("weight_decay", num(weight_decay));
  line("batch_size", std::to_string(batch_size));
  if (!schedule.empty()) line("schedule", schedule.to_string());
  line("c1", num(c1));
  line("tau", num(tau));
  line("max_passes", num(max_passes));
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    s += (i ? "," : "") + std::to_string(seeds[i]);
  line("seeds", s);
  line("grad_tol", num(grad_tol));
  line("out_dir", out_dir);
  return out;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("line {}: expected 'key = value'", lineno));
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

// ---------------------------------------------------------------------------

ProblemInstance build_problem(const ExperimentConfig& config) {
  config.validate();
  ProblemInstance inst;
  Rng rng(config.data_seed);
  if (config.dataset.empty()) {
    Rng gen = rng.fork(1);
    Dataset all = synth_classification(config.synth_n, config.synth_d,
                                       config.synth_sparsity,
                                       config.synth_separation, gen);
    Rng split = rng.fork(2);
    std::tie(inst.train, inst.test) =
        train_test_split(all, config.train_fraction, split);
  } else if (!config.test_dataset.empty()) {
    inst.train = load_libsvm(config.dataset);
    inst.test = load_libsvm(config.test_dataset);
    align_features(inst.train, inst.test);
  } else {
    Dataset all = load_libsvm(config.dataset);
    Rng split = rng.fork(2);
    std::tie(inst.train, inst.test) =
        train_test_split(all, config.train_fraction, split);
  }
  if (inst.train.rows() == 0) throw ConfigError("training set is empty");
  const double lambda =
      config.lambda_per_n
          ? config.lambda / static_cast<double>(inst.train.rows())
          : config.lambda;
  if (config.loss == LossKind::logistic)
    inst.objective =
        std::make_unique<LogisticRegression>(inst.train.x, inst.train.y, lambda);
  else
    inst.objective = std::make_unique<NonlinearLeastSquares>(
        inst.train.x, inst.train.y, config.nls_half);
  return inst;
}

std::unique_ptr<Optimizer> make_optimizer(const ExperimentConfig& config,
                                          DenseVector w0, Rng rng) {
  const std::string& m = config.method;
  if (is_oasis(m)) {
    OasisConfig oc;
    oc.rule = step_rule(m);
    oc.eta = config.eta.value_or(default_eta(m));
    oc.beta1 = config.beta1.value_or(default_beta1(m));
    oc.beta2 = config.beta2.value_or(default_beta2(m));
    oc.alpha = config.alpha;
    oc.gamma = config.gamma;
    oc.optimistic = config.optimistic;
    oc.init = config.warmstart > 0 ? DiagInit::warmstart
                                   : DiagInit::bias_corrected;
    oc.warmstart_samples = config.warmstart;
    oc.batch_size = config.batch_size;
    oc.c1 = config.c1;
    oc.tau = config.tau;
    try {
      return std::make_unique<Oasis>(oc, std::move(w0), rng);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  BaselineConfig bc;
  bc.kind = baseline_kind(m);
  bc.eta = config.eta.value_or(default_eta(m));
  bc.beta1 = config.beta1.value_or(default_beta1(m));
  bc.beta2 = config.beta2.value_or(default_beta2(m));
  bc.eps = config.eps;
  bc.weight_decay = config.weight_decay;
  bc.batch_size = config.batch_size;
  try {
    return std::make_unique<BaselineOptimizer>(bc, std::move(w0), rng);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------

ReferenceSolution reference_solve(const Objective& problem, double grad_tol_sq,
                                  std::size_t max_iter) {
  ReferenceSolution out;
  if (const auto* q = dynamic_cast<const Quadratic*>(&problem);
      q && q->is_diagonal()) {
    const DenseVector h = q->hessian_diagonal();
    const DenseVector& b = q->linear_term();
    for (double hi : h)
      if (!(hi > 0.0))
        throw std::invalid_argument("reference_solve: not strongly convex");
    out.w.resize(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) out.w[i] = b[i] / h[i];
    out.f = problem.value(out.w);
    out.grad_norm_sq = squared_norm(problem.gradient(out.w));
    out.converged = out.grad_norm_sq <= grad_tol_sq;
    return out;
  }
  if (!problem.curvature_bounds().strongly_convex)
    throw std::invalid_argument("reference_solve: not strongly convex");

  DenseVector w(problem.dim(), 0.0);
  DenseVector g = problem.gradient(w);
  double f = problem.value(w);
  double gn2 = squared_norm(g);
  std::size_t it = 0;
  for (; it < max_iter && gn2 > grad_tol_sq; ++it) {
    const double gn = std::sqrt(gn2);
    const DenseVector p =
        newton_direction(problem, w, g, std::min(0.1, gn) * gn);
    double eta = 1.0;
    bool accepted = true;
    try {
      std::size_t evals = 0;
      eta = armijo_linesearch(problem, w, p, 1.0, 1e-4, 0.5, f, g,
                              std::nullopt, &evals);
    } catch (const std::exception&) {
      accepted = false;
    }
    DenseVector trial = w;
    axpy(accepted ? eta : 1.0, p, trial);
    DenseVector g_trial = problem.gradient(trial);
    const double gn2_trial = squared_norm(g_trial);
    // Near the optimum F stops resolving the decrease; take the full Newton
    // step as long as it still shrinks the gradient.
    if (!accepted && !(gn2_trial < gn2)) break;
    w = std::move(trial);
    g = std::move(g_trial);
    gn2 = gn2_trial;
    f = problem.value(w);
  }
  out.w = std::move(w);
  out.f = f;
  out.grad_norm_sq = gn2;
  out.iterations = it;
  out.converged = gn2 <= grad_tol_sq;
  return out;
}

// ---------------------------------------------------------------------------

double lyapunov_psi(std::span<const double> w_next, std::span<const double> w,
                    std::span<const double> w_star,
                    std::span<const double> d_hat, double eta, double theta,
                    double f_w, double f_star) {
  const DenseVector to_opt = subtract(w_next, w_star);
  const DenseVector step = subtract(w_next, w);
  const double a = weighted_norm(to_opt, d_hat);
  const double b = weighted_norm(step, d_hat);
  return a * a + 0.5 * b * b + 2.0 * eta * (1.0 + theta) * (f_w - f_star);
}

double psi_beta2_threshold(double alpha, double mu, double L, double gamma) {
  const double a2m2 = alpha * alpha * mu * mu;
  const double t1 = 1.0 - (a2m2 * a2m2) /
                              (4.0 * L * L * gamma * gamma *
                               (a2m2 + L * gamma * gamma));
  const double t2 =
      1.0 - (alpha * alpha * alpha * mu * mu * mu) /
                (4.0 * L * gamma * (2.0 * a2m2 + L * L * L * gamma * gamma));
  return std::max(t1, t2);
}

std::size_t worker_count() {
  if (const char* env = std::getenv("OASIS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config) {
  const ProblemInstance inst = build_problem(config);
  std::optional<ReferenceSolution> ref;
  if (inst.objective->curvature_bounds().strongly_convex) {
    ReferenceSolution r = reference_solve(*inst.objective);
    if (r.converged) ref = std::move(r);
  }
  return run_experiment(config, inst, ref);
}

std::vector<RunRecord> run_experiment(
    const ExperimentConfig& config, const ProblemInstance& problem,
    const std::optional<ReferenceSolution>& ref) {
  config.validate();
  // Surface configuration errors before any worker starts.
  make_optimizer(config, DenseVector(problem.objective->dim(), 0.0), Rng(0));

  std::vector<RunRecord> records(config.seeds.size());
  const std::size_t workers = std::min(worker_count(), records.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < records.size();) {
      try {
        records[i] = run_seed(config, problem, ref, config.seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return records;
}

// ---------------------------------------------------------------------------
// Output

void write_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << kRunCsvHeader << '\n';
  for (const auto& rec : records) {
    for (const auto& r : rec.rows)
      out << r.seed << ',' << r.k << ',' << num(r.effective_passes) << ','
          << num(r.loss) << ',' << num(r.optimality_gap) << ','
          << num(r.grad_norm_sq) << ',' << num(r.test_accuracy) << ','
          << num(r.eta) << ',' << num(r.dhat_min) << ',' << num(r.dhat_max)
          << ',' << num(r.psi) << '\n';
    if (rec.aborted) {
      std::string msg = rec.abort_message;
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << "# aborted seed=" << rec.seed << ": " << msg << '\n';
    }
  }
}

void emit_csv(const std::vector<RunRecord>& records,
              const std::filesystem::path& path) {
  if (records.empty()) throw std::invalid_argument("emit_csv: no records");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(out, records);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<RunRecord> read_csv(std::istream& in) {
  std::vector<RunRecord> records;
  std::string line;
  if (!std::getline(in, line) || trim(line) != kRunCsvHeader)
    throw std::runtime_error("read_csv: missing or unexpected header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (line.rfind("# aborted seed=", 0) == 0) {
      const auto colon = line.find(": ");
      const auto seed = std::stoull(line.substr(15, colon - 15));
      if (records.empty() || records.back().seed != seed) {
        records.emplace_back();
        records.back().seed = seed;
      }
      records.back().aborted = true;
      records.back().abort_message =
          colon == std::string::npos ? "" : line.substr(colon + 2);
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 11)
      throw std::runtime_error(
          fmt::format("read_csv: line {}: expected 11 fields", lineno));
    auto d = [&](std::size_t i) {
      char* end = nullptr;
      const double v = std::strtod(f[i].c_str(), &end);
      if (end != f[i].c_str() + f[i].size())
        throw std::runtime_error(
            fmt::format("read_csv: line {}: bad number '{}'", lineno, f[i]));
      return v;
    };
    RunRow r;
    r.seed = std::stoull(f[0]);
    r.k = std::stoull(f[1]);
    r.effective_passes = d(2);
    r.loss = d(3);
    r.optimality_gap = d(4);
    r.grad_norm_sq = d(5);
    r.test_accuracy = d(6);
    r.eta = d(7);
    r.dhat_min = d(8);
    r.dhat_max = d(9);
    r.psi = d(10);
    if (records.empty() || records.back().seed != r.seed ||
        records.back().aborted) {
      records.emplace_back();
      records.back().seed = r.seed;
    }
    records.back().rows.push_back(r);
  }
  return records;
}

double metric_value(const RunRow& row, const std::string& metric) {
  if (metric == "loss") return row.loss;
  if (metric == "optimality_gap" || metric == "gap") return row.optimality_gap;
  if (metric == "grad_norm_sq") return row.grad_norm_sq;
  if (metric == "test_accuracy") return row.test_accuracy;
  if (metric == "eta") return row.eta;
  if (metric == "dhat_min") return row.dhat_min;
  if (metric == "dhat_max") return row.dhat_max;
  if (metric == "psi") return row.psi;
  if (metric == "effective_passes") return row.effective_passes;
  throw std::invalid_argument("unknown metric '" + metric + "'");
}

void write_svg_plot(std::ostream& out, const std::vector<RunRecord>& records,
                    const std::string& metric) {
  const bool log_y = metric == "gap" || metric == "optimality_gap" ||
                     metric == "grad_norm_sq";
  auto y_of = [&](const RunRow& r) {
    const double v = metric_value(r, metric);
    if (!std::isfinite(v)) return kNaN;
    if (log_y) return v > 0.0 ? std::log10(v) : kNaN;
    return v;
  };
  double x0 = kPosInf, x1 = -kPosInf, y0 = kPosInf,
         y1 = -kPosInf;
  for (const auto& rec : records)
    for (const auto& r : rec.rows) {
      const double y = y_of(r);
      if (std::isnan(y)) continue;
      x0 = std::min(x0, r.effective_passes);
      x1 = std::max(x1, r.effective_passes);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!(x0 <= x1)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;

  constexpr double W = 640, H = 400, ml = 70, mr = 20, mt = 20, mb = 50;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) {
    return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb);
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                  "#bcbd22", "#17becf"};

  out << fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\">\n",
      W, H, W, H);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
      "stroke=\"black\"/>\n",
      ml, mt, W - ml - mr, H - mt - mb);
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0;
    const double yv = y0 + (y1 - y0) * t / 4.0;
    out << fmt::format(
        "<text x=\"{:.2f}\" y=\"{}\" font-size=\"11\" "
        "text-anchor=\"middle\">{:.3g}</text>\n",
        px(xv), H - mb + 16, xv);
    out << fmt::format(
        "<text x=\"{}\" y=\"{:.2f}\" font-size=\"11\" "
        "text-anchor=\"end\">{}</text>\n",
        ml - 6, py(yv) + 4,
        log_y ? fmt::format("1e{:.1f}", yv) : fmt::format("{:.3g}", yv));
  }
  out << fmt::format(
      "<text x=\"{}\" y=\"{}\" font-size=\"12\" "
      "text-anchor=\"middle\">effective passes</text>\n",
      (W + ml - mr) / 2, H - 12);
  out << fmt::format(
      "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 14 {})\">{}{}</text>\n",
      (H - mb + mt) / 2, (H - mb + mt) / 2, metric, log_y ? " (log10)" : "");

  for (std::size_t i = 0; i < records.size(); ++i) {
    std::string pts;
    for (const auto& r : records[i].rows) {
      const double y = y_of(r);
      if (std::isnan(y)) continue;
      pts += fmt::format("{:.2f},{:.2f} ", px(r.effective_passes), py(y));
    }
    if (!pts.empty()) pts.pop_back();
    out << fmt::format(
        "<polyline data-seed=\"{}\" fill=\"none\" stroke=\"{}\" "
        "stroke-width=\"1.5\" points=\"{}\"/>\n",
        records[i].seed, palette[i % 10], pts);
  }
  out << "</svg>\n";
}

void emit_svg_plot(const std::vector<RunRecord>& records,
                   const std::string& metric,
                   const std::filesystem::path& path) {
  if (records.empty()) throw std::invalid_argument("emit_svg_plot: no records");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_svg_plot(out, records, metric);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Diagonal fidelity

DenseVector random_symmetric_matrix(std::size_t dim, Rng& rng) {
  const DenseVector g = standard_normal(dim * dim, rng);
  DenseVector a(dim * dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      a[i * dim + j] = 0.5 * (g[i * dim + j] + g[j * dim + i]);
  return a;
}

FidelityResult diag_fidelity_experiment(std::size_t dim, std::size_t iters,
                                        double beta2, Rng& rng, double alpha) {
  if (dim < 2) throw std::invalid_argument("fidelity: dim must be >= 2");
  const DenseVector a = random_symmetric_matrix(dim, rng);
  return diag_fidelity_experiment(a, dim, iters, beta2, rng, alpha);
}

FidelityResult diag_fidelity_experiment(std::span<const double> matrix,
                                        std::size_t dim, std::size_t iters,
                                        double beta2, Rng& rng, double alpha) {
  if (matrix.size() != dim * dim)
    throw DimensionError("fidelity: matrix is not dim x dim");
  if (!(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("fidelity: beta2 must lie in [0, 1)");
  FidelityResult res;
  res.true_diag.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) res.true_diag[i] = matrix[i * dim + i];
  DenseVector abs_diag(dim);
  for (std::size_t i = 0; i < dim; ++i) abs_diag[i] = std::abs(res.true_diag[i]);

  auto rel = [](std::span<const double> est, std::span<const double> truth) {
    const double err = norm2(subtract(est, truth));
    const double n = norm2(truth);
    return n > 0.0 ? err / n : err;
  };

  HvpOracle hvp = [&](std::span<const double>, std::span<const double> v,
                      const Batch&) {
    DenseVector out(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      out[i] = dot(matrix.subspan(i * dim, dim), v);
    return out;
  };
  const DenseVector w(dim, 0.0);
  DenseVector mean(dim, 0.0), ema(dim, 0.0), sq(dim, 0.0);
  DenseVector oasis_est(dim), ada_est(dim);
  for (std::size_t t = 0; t < iters; ++t) {
    const DenseVector z = rademacher(dim, rng);
    const DenseVector v = hutchinson_sample(hvp, w, z);
    for (std::size_t i = 0; i < dim; ++i)
      mean[i] += (v[i] - mean[i]) / static_cast<double>(t + 1);
    ema = ema_update(ema, v, beta2);
    oasis_est = clamp(bias_correct(ema, beta2, t), alpha);
    const double corr = 1.0 - std::pow(beta2, static_cast<double>(t + 1));
    for (std::size_t i = 0; i < dim; ++i) {
      sq[i] = beta2 * sq[i] + (1.0 - beta2) * v[i] * v[i];
      ada_est[i] = std::sqrt(sq[i] / corr);
    }
    res.hutchinson_error.push_back(rel(mean, res.true_diag));
    res.oasis_error.push_back(rel(oasis_est, abs_diag));
    res.adahessian_error.push_back(rel(ada_est, abs_diag));
  }
  res.hutchinson_diag = mean;
  res.oasis_diag = oasis_est;
  res.adahessian_diag = ada_est;
  return res;
}

void write_fidelity_csv(std::ostream& errors, std::ostream& scatter,
                        const FidelityResult& result) {
  errors << "iter,hutchinson,oasis,adahessian\n";
  for (std::size_t t = 0; t < result.hutchinson_error.size(); ++t)
    errors << (t + 1) << ',' << num(result.hutchinson_error[t]) << ','
           << num(result.oasis_error[t]) << ','
           << num(result.adahessian_error[t]) << '\n';
  scatter << "index,true_diag,hutchinson,oasis,adahessian\n";
  for (std::size_t i = 0; i < result.true_diag.size(); ++i)
    scatter << i << ',' << num(result.true_diag[i]) << ','
            << num(result.hutchinson_diag.empty() ? kNaN
                                                  : result.hutchinson_diag[i])
            << ','
            << num(result.oasis_diag.empty() ? kNaN : result.oasis_diag[i])
            << ','
            << num(result.adahessian_diag.empty() ? kNaN
                                                  : result.adahessian_diag[i])
            << '\n';
  if (!errors || !scatter) throw std::runtime_error("fidelity: write failed");
}

}  // namespace oasis
