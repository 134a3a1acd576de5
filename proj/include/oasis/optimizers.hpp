#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "oasis/estimator.hpp"
#include "oasis/linalg.hpp"
#include "oasis/problems.hpp"

namespace oasis {

/// Raised when an iterate or step size stops being finite.
class OptimizerAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adaptive step size in the D-weighted geometry:
///
///   min( sqrt(1 + gamma * theta_prev) * eta_prev,
///        ||dw||_D / (c * ||dg||*_D) ),   c = 2, or 1 when optimistic.
///
/// `theta_prev == std::nullopt` stands for theta = +inf and drops the first
/// candidate; ||dg||*_D == 0 drops the second. Returns std::nullopt when both
/// are dropped.
std::optional<double> adaptive_lr(double eta_prev,
                                  std::optional<double> theta_prev,
                                  std::span<const double> dw,
                                  std::span<const double> dg,
                                  std::span<const double> d_hat,
                                  double gamma = 1.0, bool optimistic = false);

/// Backtracking line search along p from w: returns the first
/// eta in {eta_init * tau^j} with F(w + eta p) <= F(w) + c1 eta grad^T p.
/// Throws std::invalid_argument if p is not a descent direction and
/// std::runtime_error after 60 reductions.
double armijo_linesearch(const Objective& problem, std::span<const double> w,
                         std::span<const double> p, double eta_init,
                         double c1 = 1e-4, double tau = 0.5,
                         const Batch& batch = std::nullopt);

/// Same, with F(w) and grad F(w) supplied by the caller. `evaluations`
/// receives the number of function evaluations spent.
double armijo_linesearch(const Objective& problem, std::span<const double> w,
                         std::span<const double> p, double eta_init, double c1,
                         double tau, double f_w,
                         std::span<const double> grad_w, const Batch& batch,
                         std::size_t* evaluations);

// ---------------------------------------------------------------------------
// Step-size schedules

/// (epoch, multiplier) pairs, epochs strictly increasing, multipliers > 0.
class ScheduleSpec {
 public:
  ScheduleSpec() = default;
  explicit ScheduleSpec(std::vector<std::pair<std::size_t, double>> points);

  /// Parses "80:0.1,120:0.1"; empty text gives an empty schedule.
  static ScheduleSpec parse(const std::string& text);

  const std::vector<std::pair<std::size_t, double>>& points() const {
    return points_;
  }
  bool empty() const { return points_.empty(); }

  /// Product of the multipliers scheduled for exactly `epoch`.
  double multiplier_at(std::size_t epoch) const;

  std::string to_string() const;

 private:
  std::vector<std::pair<std::size_t, double>> points_;
};

/// eta scaled by the multiplier scheduled at the `epoch` boundary.
double apply_schedule(double eta, const ScheduleSpec& schedule,
                      std::size_t epoch);

// ---------------------------------------------------------------------------
// Common driver interface

/// What one call to Optimizer::step() did.
struct StepReport {
  std::size_t k = 0;            // index of the iterate the step started from
  double eta = 0.0;             // step size applied
  std::optional<double> theta;  // eta_k / eta_{k-1}; nullopt on the first step
  double growth_cap = 0.0;      // sqrt(1 + gamma theta_{k-1}) eta_{k-1}, or inf
  double dhat_min = 1.0;
  double dhat_max = 1.0;
  double drift_inf = 0.0;    // ||D_k - D_{k-1}||_inf of the raw estimate
  double sample_inf = 0.0;   // ||v_k||_inf of this step's Hutchinson sample
  double passes = 0.0;       // cumulative effective passes after the step
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;

  /// One iteration from the current iterate. Throws OptimizerAbort when the
  /// new iterate is not finite.
  virtual StepReport step(const Objective& problem) = 0;

  /// Multiplies the step size in force (the fixed eta, or the previous
  /// adaptive eta and hence the growth cap built from it).
  virtual void scale_step_size(double rho) = 0;

  virtual std::string name() const = 0;

  /// Diagonal currently used to scale the search direction.
  virtual std::span<const double> scaling() const = 0;

  const DenseVector& weights() const { return w_; }
  double passes() const { return passes_; }
  std::size_t iteration() const { return k_; }
  std::size_t batch_size() const { return batch_size_; }

 protected:
  Optimizer(DenseVector w0, std::size_t batch_size, Rng rng)
      : w_(std::move(w0)), batch_size_(batch_size), rng_(rng) {}

  /// Draws I_k (or returns the full set) and the corresponding pass cost.
  Batch next_batch(const Objective& problem, double* fraction);

  DenseVector w_;
  double passes_ = 0.0;
  std::size_t k_ = 0;
  std::size_t batch_size_ = 0;  // 0 = full batch
  Rng rng_;
  std::vector<std::size_t> batch_storage_;
};

// ---------------------------------------------------------------------------
// OASIS

enum class StepRule { adaptive, fixed, momentum, linesearch };
enum class DiagInit { warmstart, bias_corrected, explicit_diag };

struct OasisConfig {
  StepRule rule = StepRule::adaptive;
  /// eta_0 for the adaptive rule, the constant eta otherwise, eta_init for
  /// the line search.
  double eta = 1e-4;
  double beta1 = 0.9;  // momentum only
  double beta2 = 0.99;
  double alpha = 1e-3;
  double gamma = 1.0;
  bool optimistic = false;
  DiagInit init = DiagInit::warmstart;
  std::size_t warmstart_samples = 10;
  DenseVector initial_diag;    // DiagInit::explicit_diag
  std::size_t batch_size = 0;  // 0 = deterministic
  double c1 = 1e-4;            // line search
  double tau = 0.5;

  void validate(std::size_t dim) const;
};

/// Mutable state of an OASIS run.
struct OasisState {
  DenseVector w;
  DenseVector w_prev;
  DenseVector g_prev;
  double eta = 0.0;            // eta_{k-1} going into step k
  std::optional<double> theta; // theta_{k-1}; nullopt is the +inf sentinel
  DiagonalPreconditioner precond;
  DenseVector m;
  std::size_t k = 0;
  double pass_count = 0.0;
};

class Oasis final : public Optimizer {
 public:
  Oasis(const OasisConfig& config, DenseVector w0, Rng rng);

  StepReport step(const Objective& problem) override;
  void scale_step_size(double rho) override;
  std::string name() const override;
  std::span<const double> scaling() const override { return precond_.d_hat; }

  const OasisConfig& config() const { return cfg_; }
  const DiagonalPreconditioner& preconditioner() const { return precond_; }
  /// Snapshot of the run state.
  OasisState state() const;

 private:
  StepReport first_step(const Objective& problem);
  void refresh_preconditioner(const Objective& problem, const Batch& batch,
                              double fraction, StepReport& rep);

  OasisConfig cfg_;
  DiagonalPreconditioner precond_;
  DenseVector w_prev_;
  DenseVector g_prev_;
  DenseVector m_;
  double eta_prev_ = 0.0;
  std::optional<double> theta_prev_;
  std::size_t ema_updates_ = 0;  // updates folded into d_raw (bias correction)
};

// ---------------------------------------------------------------------------
// Baselines

enum class BaselineKind { sgd, adagrad, rmsprop, adam, adamw, adahessian, adgd };

struct BaselineConfig {
  BaselineKind kind = BaselineKind::sgd;
  double eta = 1e-3;  // eta_0 for adgd
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // adamw only (decoupled)
  std::size_t batch_size = 0;

  void validate() const;
};

/// Update w <- w - eta m / D with each method's first moment m and
/// diagonal D (epsilon added after the square root).
class BaselineOptimizer final : public Optimizer {
 public:
  BaselineOptimizer(const BaselineConfig& config, DenseVector w0, Rng rng);

  StepReport step(const Objective& problem) override;
  void scale_step_size(double rho) override;
  std::string name() const override;
  std::span<const double> scaling() const override { return d_; }

  const BaselineConfig& config() const { return cfg_; }

 private:
  BaselineConfig cfg_;
  DenseVector m_;
  DenseVector d_;
  std::optional<SecondMomentAccumulator> moments_;
  // adgd
  DenseVector w_prev_;
  DenseVector g_prev_;
  double eta_prev_ = 0.0;
  std::optional<double> theta_prev_;
};

std::string to_string(BaselineKind kind);
std::string to_string(StepRule rule);

}  // namespace oasis
