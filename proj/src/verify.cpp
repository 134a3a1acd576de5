#include "oasis/verify.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace oasis {

namespace {

constexpr double kExactTol = 1e-12;
constexpr double kRelTol = 1e-9;

CheckResult make_result(std::string name, std::string anchor,
                        const std::string& context) {
  CheckResult r;
  r.name = std::move(name);
  r.anchor = std::move(anchor);
  r.context = context;
  r.worst_margin = std::numeric_limits<double>::infinity();
  return r;
}

void note_violation(CheckResult& r, std::size_t k, const std::string& what) {
  if (r.status != CheckStatus::fail) {
    r.status = CheckStatus::fail;
    r.first_violation = k;
    r.detail += (r.detail.empty() ? "" : "; ") + what;
  }
}

DenseVector initial_point(const Objective& problem, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(1);
  return scaled(0.01, standard_normal(problem.dim(), rng));
}

Rng optimizer_rng(std::uint64_t seed) { return Rng(seed).fork(2); }

OasisConfig oasis_config(StepRule rule, double eta, double alpha,
                         double beta2) {
  OasisConfig c;
  c.rule = rule;
  c.eta = eta;
  c.alpha = alpha;
  c.beta2 = beta2;
  c.init = DiagInit::warmstart;
  c.warmstart_samples = 10;
  return c;
}

// Runs until the pass budget is spent and returns F at the last iterate.
double value_after_passes(Optimizer& opt, const Objective& problem,
                          double passes) {
  while (opt.passes() < passes) opt.step(problem);
  return problem.value(opt.weights());
}

// Passes when the inner check detected the planted violation.
CheckResult negative_control(CheckResult inner, const std::string& name,
                             bool detected, const std::string& what) {
  CheckResult r = inner;
  r.name = name;
  r.status = detected ? CheckStatus::pass : CheckStatus::fail;
  r.detail = fmt::format("{} ({}; inner status {}{})", what, inner.detail,
                         to_string(inner.status),
                         inner.first_violation
                             ? fmt::format(", first violation at k={}",
                                           *inner.first_violation)
                             : std::string{});
  return r;
}

}  // namespace

std::string to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::refused: return "refused";
  }
  return "?";
}

bool TheoryReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) {
    return c.status == CheckStatus::pass;
  });
}

std::size_t TheoryReport::count(CheckStatus status) const {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(),
                    [&](const CheckResult& c) { return c.status == status; }));
}

void TheoryReport::write_csv(std::ostream& out) const {
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  out << "name,anchor,status,worst_margin,context,iterations,first_violation,"
         "detail\n";
  for (const auto& c : checks)
    out << c.name << ',' << quote(c.anchor) << ',' << to_string(c.status)
        << ',' << fmt::format("{:.17g}", c.worst_margin) << ','
        << quote(c.context) << ',' << c.iterations << ','
        << (c.first_violation ? std::to_string(*c.first_violation) : "")
        << ',' << quote(c.detail) << '\n';
}

void TheoryReport::write_text(std::ostream& out) const {
  for (const auto& c : checks) {
    out << fmt::format("[{:>7}] {:<28} {:<10} margin={:<12.4g} iters={}",
                       to_string(c.status), c.name, c.context, c.worst_margin,
                       c.iterations);
    if (c.first_violation) out << " first_violation=" << *c.first_violation;
    out << "\n          " << c.anchor;
    if (!c.detail.empty()) out << ": " << c.detail;
    out << '\n';
  }
  out << fmt::format("{} checks: {} pass, {} fail, {} refused\n", checks.size(),
                     count(CheckStatus::pass), count(CheckStatus::fail),
                     count(CheckStatus::refused));
}

// ---------------------------------------------------------------------------

double Trace::gamma_emp() const {
  double g = 0.0;
  for (const auto& p : points) g = std::max(g, p.report.dhat_max);
  return g;
}

double Trace::sample_gamma() const {
  double g = 0.0;
  for (const auto& p : points) g = std::max(g, p.report.sample_inf);
  return g;
}

Trace trace_run(Optimizer& optimizer, const Objective& problem,
                std::size_t steps) {
  Trace t;
  t.w0 = optimizer.weights();
  t.f0 = problem.value(t.w0);
  t.g0 = problem.gradient(t.w0);
  t.grad0_sq = squared_norm(t.g0);
  t.points.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    TracePoint p;
    p.report = optimizer.step(problem);
    p.w = optimizer.weights();
    const auto s = optimizer.scaling();
    p.d_hat.assign(s.begin(), s.end());
    p.f = problem.value(p.w);
    p.g = problem.gradient(p.w);
    p.grad_norm_sq = squared_norm(p.g);
    t.points.push_back(std::move(p));
  }
  return t;
}

// ---------------------------------------------------------------------------

CheckResult check_eta_bounds(const Trace& run, const CurvatureBounds& bounds,
                             double alpha, const std::string& context) {
  CheckResult r = make_result("eta_bounds", "adaptive step-size bounds "
                              "alpha/(2L) <= eta_k <= Gamma/(2 mu)", context);
  if (!bounds.strongly_convex || !(bounds.mu > 0.0)) {
    r.status = CheckStatus::refused;
    r.detail = "not strongly convex";
    r.worst_margin = 0.0;
    return r;
  }
  const double gamma = run.gamma_emp();
  const double lo = alpha / (2.0 * bounds.L);
  const double hi = gamma / (2.0 * bounds.mu);
  r.detail = fmt::format("L={:.6g} mu={:.6g} Gamma_emp={:.6g} range=[{:.6g}, {:.6g}]",
                         bounds.L, bounds.mu, gamma, lo, hi);
  std::size_t stationary = 0;
  for (const auto& p : run.points) {
    const std::size_t k = p.report.k;
    if (k == 0) continue;  // eta_0 is the user's initial value
    // eta_k is built from w_k - w_{k-1} and g_k - g_{k-1}.
    const TracePoint& cur = run.points[k - 1];
    const auto& w_prev = k >= 2 ? run.points[k - 2].w : run.w0;
    const auto& g_prev = k >= 2 ? run.points[k - 2].g : run.g0;
    if (max_abs_diff(cur.w, w_prev) == 0.0 || max_abs_diff(cur.g, g_prev) == 0.0) {
      ++stationary;
      continue;
    }
    ++r.iterations;
    const double eta = p.report.eta;
    r.worst_margin = std::min({r.worst_margin, (eta - lo) / lo, (hi - eta) / hi});
    if (!(eta >= lo - kExactTol) || !(eta <= hi + kExactTol))
      note_violation(r, k, fmt::format("eta_{}={:.17g}", k, eta));
  }
  if (stationary > 0)
    r.detail += fmt::format(" skipped {} stationary steps", stationary);
  return r;
}

CheckResult check_fixed_lr_rate(const Trace& run, double L, double mu,
                                double alpha, double eta, double f_star,
                                const std::string& context) {
  CheckResult r = make_result(
      "fixed_lr_rate",
      "fixed-step linear rate F(w_k)-F* <= (1 - eta mu/Gamma)^k (F(w_0)-F*)",
      context);
  const double gamma = run.gamma_emp();
  const double rho = 1.0 - eta * mu / gamma;
  const double gap0 = run.f0 - f_star;
  const double eta_max = alpha * alpha / (L * gamma);
  r.detail = fmt::format("eta={:.6g} eta_max={:.6g} ({}) Gamma_emp={:.6g} rho={:.9g}",
                         eta, eta_max, eta <= eta_max ? "within" : "exceeded",
                         gamma, rho);
  r.worst_margin = 0.0;  // k = 0 holds with equality
  bool first = true;
  for (const auto& p : run.points) {
    const std::size_t k = p.report.k + 1;
    ++r.iterations;
    const double lhs = p.f - f_star;
    const double rhs = std::pow(rho, static_cast<double>(k)) * gap0;
    const double scale = std::abs(rhs) + std::abs(f_star) + std::abs(p.f);
    const double margin = (rhs - lhs) / scale;
    if (first || margin < r.worst_margin) r.worst_margin = margin;
    first = false;
    if (!(lhs <= rhs + kRelTol * scale))
      note_violation(r, k, fmt::format("k={} gap={:.17g} bound={:.17g}", k,
                                       lhs, rhs));
  }
  return r;
}

CheckResult check_nonconvex_bound(const Trace& run, double eta, double f_hat,
                                  const std::string& context) {
  CheckResult r = make_result(
      "nonconvex_bound",
      "fixed-step averaged gradient bound 2 Gamma (F(w_0)-F_hat)/(eta T)",
      context);
  const double gamma = run.gamma_emp();
  r.detail = fmt::format("eta={:.6g} Gamma_emp={:.6g} F0={:.6g} F_hat={:.6g}",
                         eta, gamma, run.f0, f_hat);
  double sum = 0.0;
  for (std::size_t t = 0; t < run.points.size(); ++t) {
    const std::size_t T = t + 1;
    ++r.iterations;
    sum += run.points[t].grad_norm_sq;
    const double lhs = sum / static_cast<double>(T);
    const double rhs =
        2.0 * gamma * (run.f0 - f_hat) / (eta * static_cast<double>(T));
    const double margin = rhs > 0.0 ? (rhs - lhs) / rhs : rhs - lhs;
    r.worst_margin = std::min(r.worst_margin, margin);
    if (!(lhs <= rhs + kRelTol * std::abs(rhs)))
      note_violation(r, T, fmt::format("T={} avg={:.17g} bound={:.17g}", T,
                                       lhs, rhs));
  }
  return r;
}

CheckResult check_adgd_equivalence(const Objective& problem,
                                   const DenseVector& w0, double eta0,
                                   std::size_t steps, const std::string& context,
                                   double beta2, std::uint64_t seed) {
  CheckResult r = make_result(
      "adgd_equivalence",
      "OASIS with beta2 = 1, alpha = 1, D_0 = I reduces to AdGD", context);
  OasisConfig oc;
  oc.rule = StepRule::adaptive;
  oc.eta = eta0;
  oc.alpha = 1.0;
  oc.beta2 = beta2;
  oc.init = DiagInit::explicit_diag;
  oc.initial_diag.assign(problem.dim(), 1.0);
  Oasis oasis(oc, w0, optimizer_rng(seed));

  BaselineConfig bc;
  bc.kind = BaselineKind::adgd;
  bc.eta = eta0;
  BaselineOptimizer adgd(bc, w0, optimizer_rng(seed));

  double worst = 0.0;
  for (std::size_t k = 1; k <= steps; ++k) {
    oasis.step(problem);
    adgd.step(problem);
    ++r.iterations;
    const double diff = max_abs_diff(oasis.weights(), adgd.weights());
    worst = std::max(worst, diff);
    if (!(diff <= kExactTol))
      note_violation(r, k, fmt::format("k={} max|w_oasis - w_adgd|={:.3g}", k,
                                        diff));
  }
  r.worst_margin = kExactTol - worst;
  r.detail += fmt::format("{}beta2={} eta0={:.3g} max diff={:.3g}",
                          r.detail.empty() ? "" : "; ", beta2, eta0, worst);
  return r;
}

CheckResult check_spectrum_and_drift(const Trace& run, double alpha,
                                     double beta2, const std::string& context) {
  CheckResult r = make_result(
      "spectrum_and_drift",
      "alpha I <= D-hat_k and ||D_{k+1}-D_k||_inf <= 2(1-beta2) Gamma", context);
  const double gamma = run.sample_gamma();
  const double delta = 2.0 * (1.0 - beta2) * gamma;
  r.detail = fmt::format("alpha={:.3g} Gamma(samples)={:.6g} Gamma_emp={:.6g} "
                         "delta={:.6g}",
                         alpha, gamma, run.gamma_emp(), delta);
  for (const auto& p : run.points) {
    const std::size_t k = p.report.k;
    ++r.iterations;
    r.worst_margin = std::min(r.worst_margin, (p.report.dhat_min - alpha) / alpha);
    if (!(p.report.dhat_min >= alpha))
      note_violation(r, k, fmt::format("k={} min D-hat={:.17g}", k,
                                       p.report.dhat_min));
    if (delta > 0.0)
      r.worst_margin =
          std::min(r.worst_margin, (delta - p.report.drift_inf) / delta);
    if (!(p.report.drift_inf <= delta + kExactTol))
      note_violation(r, k, fmt::format("k={} drift={:.17g} > {:.17g}", k,
                                       p.report.drift_inf, delta));
  }
  return r;
}

CheckResult check_psi_contraction(const Trace& run,
                                  const ReferenceSolution& ref,
                                  const CurvatureBounds& bounds, double alpha,
                                  double beta2, const std::string& context) {
  CheckResult r = make_result(
      "psi_contraction",
      "Lyapunov contraction Psi^{k+1} <= (1 - alpha^2/(2 Gamma^2 kappa^2)) Psi^k",
      context);
  if (!bounds.strongly_convex || !(bounds.mu > 0.0)) {
    r.status = CheckStatus::refused;
    r.detail = "not strongly convex";
    r.worst_margin = 0.0;
    return r;
  }
  const double gamma = run.gamma_emp();
  const double threshold = psi_beta2_threshold(alpha, bounds.mu, bounds.L, gamma);
  if (beta2 < threshold) {
    r.status = CheckStatus::refused;
    r.detail = fmt::format("beta2={} below threshold {:.17g}", beta2, threshold);
    r.worst_margin = 0.0;
    return r;
  }
  const double kappa = bounds.L / bounds.mu;
  const double rho = 1.0 - alpha * alpha / (2.0 * gamma * gamma * kappa * kappa);
  r.detail = fmt::format("beta2={} threshold={:.17g} Gamma_emp={:.6g} rho={:.12g}",
                         beta2, threshold, gamma, rho);
  const double eps = std::numeric_limits<double>::epsilon();
  const double w_star_sq = squared_norm(ref.w);
  std::optional<double> prev;
  double prev_floor = 0.0;
  std::size_t below_floor = 0;
  for (std::size_t i = 0; i < run.points.size(); ++i) {
    const auto& p = run.points[i];
    if (!p.report.theta) {
      prev.reset();
      continue;
    }
    const auto& w_k = i == 0 ? run.w0 : run.points[i - 1].w;
    const double f_k = i == 0 ? run.f0 : run.points[i - 1].f;
    const double psi = lyapunov_psi(p.w, w_k, ref.w, p.d_hat, p.report.eta,
                                    *p.report.theta, f_k, ref.f);
    const double floor =
        1e4 * eps *
        (2.0 * p.report.eta * (1.0 + *p.report.theta) *
             (std::abs(f_k) + std::abs(ref.f)) +
         gamma * (squared_norm(p.w) + squared_norm(w_k) + w_star_sq));
    if (prev && !(*prev > prev_floor)) {
      ++below_floor;
    } else if (prev) {
      const std::size_t k = p.report.k + 1;
      ++r.iterations;
      const double bound = rho * *prev;
      r.worst_margin = std::min(r.worst_margin, (bound - psi) / *prev);
      if (!(psi <= bound + kRelTol * *prev))
        note_violation(r, k, fmt::format("k={} Psi={:.17g} bound={:.17g}", k,
                                         psi, bound));
    }
    prev = psi;
    prev_floor = floor;
  }
  if (below_floor > 0)
    r.detail += fmt::format(" skipped {} steps below the rounding floor",
                            below_floor);
  return r;
}

CheckResult check_stochastic_neighborhood(double deterministic_gap,
                                          double stochastic_gap, double passes,
                                          const std::string& context) {
  CheckResult r = make_result(
      "stochastic_neighborhood",
      "stochastic fixed-step gap within 10x of deterministic at matched passes",
      context);
  r.iterations = 1;
  const double bound = 10.0 * deterministic_gap;
  r.worst_margin = bound > 0.0 ? (bound - stochastic_gap) / bound : -stochastic_gap;
  r.detail = fmt::format("passes={} deterministic gap={:.6g} stochastic gap={:.6g}",
                         passes, deterministic_gap, stochastic_gap);
  if (!(stochastic_gap <= bound)) note_violation(r, 0, "gap above 10x");
  return r;
}

// ---------------------------------------------------------------------------

std::vector<Fixture> fixture_battery() {
  std::vector<Fixture> out;
  out.push_back({"Q1", std::make_shared<Quadratic>(
                           Quadratic::diagonal({2.0, 8.0}, {2.0, 8.0}))});

  {
    constexpr std::size_t d = 10, m = 20;
    Rng rng(101);
    const DenseVector a = standard_normal(m * d, rng);
    DenseVector h(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < m; ++r) s += a[r * d + i] * a[r * d + j];
        h[i * d + j] = s / static_cast<double>(m) + (i == j ? 0.5 : 0.0);
      }
    out.push_back({"Q2", std::make_shared<Quadratic>(Quadratic::dense(
                             d, std::move(h), standard_normal(d, rng)))});
  }

  Rng data(202);
  const Dataset ds = synth_classification(200, 10, 1.0, 1.0, data);
  out.push_back({"L1", std::make_shared<LogisticRegression>(ds.x, ds.y, 0.1)});
  out.push_back(
      {"L2", std::make_shared<LogisticRegression>(ds.x, ds.y, 1.0 / 200.0)});
  out.push_back({"N1", std::make_shared<NonlinearLeastSquares>(ds.x, ds.y)});
  return out;
}

TheoryReport run_theory_suite(const std::vector<std::uint64_t>& seeds) {
  TheoryReport report;
  const auto fixtures = fixture_battery();
  constexpr std::size_t kSteps = 100;
  constexpr double kAlpha = 1e-3;

  for (const auto& fx : fixtures) {
    const Objective& problem = *fx.problem;
    const CurvatureBounds cb = problem.curvature_bounds();
    std::optional<ReferenceSolution> ref;
    if (cb.strongly_convex) ref = reference_solve(problem);

    for (std::uint64_t seed : seeds) {
      const std::string ctx = fmt::format("{} seed={}", fx.name, seed);
      const DenseVector w0 = initial_point(problem, seed);

      // Adaptive rule with the usual settings.
      {
        Oasis opt(oasis_config(StepRule::adaptive, 1e-4, kAlpha, 0.99), w0,
                  optimizer_rng(seed));
        const Trace tr = trace_run(opt, problem, kSteps);
        CheckResult eb = check_eta_bounds(tr, cb, kAlpha, ctx);
        if (cb.strongly_convex)
          report.checks.push_back(eb);
        else
          report.checks.push_back(negative_control(
              eb, "eta_bounds_guard", eb.status == CheckStatus::refused &&
                                          eb.detail == "not strongly convex",
              "refuses problems without strong convexity"));
        report.checks.push_back(check_spectrum_and_drift(tr, kAlpha, 0.99, ctx));
      }

      // beta2 = 1 freezes D at the warmstart: drift must vanish.
      {
        Oasis opt(oasis_config(StepRule::adaptive, 1e-4, kAlpha, 1.0), w0,
                  optimizer_rng(seed));
        const Trace tr = trace_run(opt, problem, 20);
        CheckResult sd = check_spectrum_and_drift(tr, kAlpha, 1.0, ctx);
        sd.name = "zero_drift";
        report.checks.push_back(sd);
        if (ref) {
          Oasis popt(oasis_config(StepRule::adaptive, 1e-4, kAlpha, 1.0), w0,
                     optimizer_rng(seed));
          const Trace pt = trace_run(popt, problem, kSteps);
          report.checks.push_back(
              check_psi_contraction(pt, *ref, cb, kAlpha, 1.0, ctx));
        }
      }

      if (ref) {
        // Fixed step at the largest admissible eta, alpha = mu.
        const double alpha = cb.mu;
        const double gamma_bound =
            std::max(alpha, problem.hutchinson_entry_bound());
        double eta = alpha * alpha / (cb.L * gamma_bound);
        if (dynamic_cast<const Quadratic*>(&problem)) {
          // Constant Hessian: D-hat does not depend on the iterates, so a
          // pilot run with the same probes measures Gamma_emp exactly.
          Oasis pilot(oasis_config(StepRule::fixed, eta, alpha, 0.99), w0,
                      optimizer_rng(seed));
          eta = alpha * alpha / (cb.L * trace_run(pilot, problem, kSteps).gamma_emp());
        }
        Oasis opt(oasis_config(StepRule::fixed, eta, alpha, 0.99), w0,
                  optimizer_rng(seed));
        const Trace tr = trace_run(opt, problem, kSteps);
        report.checks.push_back(
            check_fixed_lr_rate(tr, cb.L, cb.mu, alpha, eta, ref->f, ctx));
      }

      if (fx.name == "Q1") {
        // alpha = 8 makes D-hat = 8I and eta = alpha^2/(L Gamma) = 1; ten
        // times that overshoots every coordinate.
        const double alpha = 8.0, eta = 10.0;
        Oasis opt(oasis_config(StepRule::fixed, eta, alpha, 0.99), w0,
                  optimizer_rng(seed));
        const Trace tr = trace_run(opt, problem, kSteps);
        const CheckResult inner =
            check_fixed_lr_rate(tr, cb.L, cb.mu, alpha, eta, ref->f, ctx);
        report.checks.push_back(negative_control(
            inner, "fixed_lr_rate_negative",
            inner.status == CheckStatus::fail && inner.first_violation.has_value(),
            "10x admissible eta must be caught"));
      }

      if (!cb.strongly_convex) {
        const double gamma_bound = problem.hutchinson_entry_bound();
        const double alpha = 0.1 * gamma_bound;
        const double eta = alpha * alpha / (cb.L * gamma_bound);
        Oasis opt(oasis_config(StepRule::fixed, eta, alpha, 0.99), w0,
                  optimizer_rng(seed));
        const Trace tr = trace_run(opt, problem, 200);
        CheckResult nb = check_nonconvex_bound(tr, eta, 0.0, ctx);
        nb.detail += fmt::format(" eta_max={:.6g}",
                                 alpha * alpha / (cb.L * tr.gamma_emp()));
        report.checks.push_back(nb);
      }

      report.checks.push_back(
          check_adgd_equivalence(problem, w0, 1e-4, 50, ctx, 1.0, seed));
      if (fx.name == "Q1") {
        const CheckResult inner =
            check_adgd_equivalence(problem, w0, 1e-4, 10, ctx, 0.5, seed);
        report.checks.push_back(negative_control(
            inner, "adgd_equivalence_negative",
            inner.status == CheckStatus::fail &&
                kExactTol - inner.worst_margin > 1e-6,
            "beta2 = 0.5 must separate the trajectories by > 1e-6 within 10 steps"));
      }

      if (ref && problem.n_samples() > 1) {
        // Same probes cost the same passes in both regimes: start from the
        // bias-corrected zero diagonal rather than a warmstart.
        constexpr double kPasses = 20.0;
        OasisConfig cfg = oasis_config(StepRule::fixed, 0.1, kAlpha, 0.99);
        cfg.init = DiagInit::bias_corrected;
        Oasis det(cfg, w0, optimizer_rng(seed));
        const double det_gap =
            value_after_passes(det, problem, kPasses) - ref->f;
        cfg.batch_size = 20;
        Oasis sto(cfg, w0, optimizer_rng(seed));
        const double sto_gap =
            value_after_passes(sto, problem, kPasses) - ref->f;
        report.checks.push_back(
            check_stochastic_neighborhood(det_gap, sto_gap, kPasses, ctx));
      }
    }
  }
  return report;
}

}  // namespace oasis
