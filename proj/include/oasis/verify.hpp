#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oasis/harness.hpp"
#include "oasis/optimizers.hpp"
#include "oasis/problems.hpp"

namespace oasis {

enum class CheckStatus { pass, fail, refused };

std::string to_string(CheckStatus status);

/// Outcome of one theory check on one run.
struct CheckResult {
  std::string name;
  std::string anchor;   // the result being checked
  CheckStatus status = CheckStatus::pass;
  /// Smallest slack observed, relative to the bound (negative on failure).
  double worst_margin = 0.0;
  std::string context;  // fixture and seed
  std::size_t iterations = 0;  // iterations inspected
  std::optional<std::size_t> first_violation;
  std::string detail;   // constants used, or the violating values
};

struct TheoryReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  std::size_t count(CheckStatus status) const;
  void write_csv(std::ostream& out) const;
  void write_text(std::ostream& out) const;
};

// ---------------------------------------------------------------------------
// Instrumented runs

/// State after one step: iterate k = report.k + 1.
struct TracePoint {
  StepReport report;
  DenseVector w;
  DenseVector d_hat;  // scaling used by the step
  DenseVector g;      // full gradient at w
  double f = 0.0;
  double grad_norm_sq = 0.0;
};

struct Trace {
  DenseVector w0;
  DenseVector g0;
  double f0 = 0.0;
  double grad0_sq = 0.0;
  std::vector<TracePoint> points;

  /// Largest D-hat entry over the run.
  double gamma_emp() const;
  /// Largest |entry| of the raw diagonal or of any Hutchinson sample.
  double sample_gamma() const;
};

/// Runs `steps` iterations on the full objective, recording everything.
Trace trace_run(Optimizer& optimizer, const Objective& problem,
                std::size_t steps);

// ---------------------------------------------------------------------------
// Checks (pure functions of completed traces)

/// alpha/(2L) - 1e-12 <= eta_k <= Gamma_emp/(2 mu) + 1e-12 for k >= 1.
/// Steps whose w_k - w_{k-1} or g_k - g_{k-1} is exactly zero (the iterate
/// has stopped moving in floating point) leave the ratio undefined and are
/// skipped; the count is reported. Refused when the problem is not strongly
/// convex.
CheckResult check_eta_bounds(const Trace& run, const CurvatureBounds& bounds,
                             double alpha, const std::string& context);

/// F(w_k) - F* <= (1 - eta mu / Gamma_emp)^k (F(w_0) - F*) at every k.
/// The tolerance is 1e-9 relative to the magnitudes compared. Whether eta
/// satisfied eta <= alpha^2/(L Gamma_emp) is noted in the detail.
CheckResult check_fixed_lr_rate(const Trace& run, double L, double mu,
                                double alpha, double eta, double f_star,
                                const std::string& context);

/// (1/T) sum_{k=1..T} ||grad F(w_k)||^2 <= 2 Gamma_emp (F(w_0) - F_hat)/(eta T)
/// for every T in the trace.
CheckResult check_nonconvex_bound(const Trace& run, double eta, double f_hat,
                                  const std::string& context);

/// OASIS with D_0 = I, alpha = 1 and the given beta2 against AdGD, both
/// from w0 with eta_0; passes when the iterates agree to 1e-12 over
/// `steps` steps. worst_margin is 1e-12 minus the largest difference.
CheckResult check_adgd_equivalence(const Objective& problem,
                                   const DenseVector& w0, double eta0,
                                   std::size_t steps, const std::string& context,
                                   double beta2 = 1.0, std::uint64_t seed = 0);

/// alpha <= min D-hat at every step, and
/// ||D_{k+1} - D_k||_inf <= 2 (1 - beta2) Gamma with Gamma = sample_gamma().
CheckResult check_spectrum_and_drift(const Trace& run, double alpha,
                                     double beta2, const std::string& context);

/// Lyapunov contraction of the adaptive rule with factor
/// 1 - alpha^2 / (2 Gamma^2 kappa^2). Refused unless beta2 meets
/// psi_beta2_threshold(alpha, mu, L, Gamma_emp). Pairs are inspected while
/// Psi^k stays above its rounding floor 1e4 * eps * S, where S sums the
/// magnitudes entering Psi; below it Psi is noise.
CheckResult check_psi_contraction(const Trace& run,
                                  const ReferenceSolution& ref,
                                  const CurvatureBounds& bounds, double alpha,
                                  double beta2, const std::string& context);

/// Stochastic and deterministic runs of the same optimizer settings, gaps
/// compared at matched effective passes: stochastic <= 10x deterministic.
CheckResult check_stochastic_neighborhood(double deterministic_gap,
                                          double stochastic_gap, double passes,
                                          const std::string& context);

// ---------------------------------------------------------------------------
// Fixture battery

struct Fixture {
  std::string name;
  std::shared_ptr<const Objective> problem;
};

/// Q1: diag(2, 8) with b = (2, 8). Q2: dense SPD, d = 10.
/// L1, L2: synthetic logistic (n = 200, d = 10) with lambda = 0.1 and 1/n.
/// N1: synthetic NLS (n = 200, d = 10).
std::vector<Fixture> fixture_battery();

/// Every check on every fixture and seed. Negative controls appear as
/// entries that pass when the inner check detects the violation.
TheoryReport run_theory_suite(const std::vector<std::uint64_t>& seeds = {0, 1,
                                                                          2});

}  // namespace oasis
