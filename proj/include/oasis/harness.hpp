#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasis/dataio.hpp"
#include "oasis/optimizers.hpp"
#include "oasis/problems.hpp"

namespace oasis {

/// Invalid or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossKind { logistic, nls };

/// One experiment: a problem, an optimizer and the run controls.
///
/// Method-dependent hyperparameters left unset take the method's default
/// (see README).
struct ExperimentConfig {
  // problem
  std::string dataset;       // LIBSVM path; empty = synthetic
  std::string test_dataset;  // optional separate test file
  double train_fraction = 0.75;
  std::size_t synth_n = 200;
  std::size_t synth_d = 10;
  double synth_sparsity = 1.0;
  double synth_separation = 1.0;
  std::uint64_t data_seed = 0;
  LossKind loss = LossKind::logistic;
  double lambda = 0.0;
  bool lambda_per_n = true;  // lambda is multiplied by 1/n_train
  bool nls_half = false;

  // optimizer
  std::string method = "oasis-adaptive";
  std::optional<double> eta;
  std::optional<double> beta1;
  std::optional<double> beta2;
  double alpha = 1e-3;
  double gamma = 1.0;
  bool optimistic = false;
  std::size_t warmstart = 10;  // 0 = bias-corrected start
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t batch_size = 0;  // 0 = full batch
  ScheduleSpec schedule;
  double c1 = 1e-4;
  double tau = 0.5;

  // run controls
  double max_passes = 40.0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  double grad_tol = 0.0;
  std::string out_dir = "out";

  /// Applies one `key = value` setting. Throws ConfigError.
  void set(const std::string& key, const std::string& value);

  /// Checks ranges and cross-field consistency. Throws ConfigError.
  void validate() const;

  /// Round-trippable `key = value` text.
  std::string to_text() const;
};

/// Reads `key = value` lines; `#` starts a comment, blank lines are skipped.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Problem built from a config, with the held-out test rows.
struct ProblemInstance {
  std::unique_ptr<Objective> objective;
  Dataset train;
  Dataset test;
};

ProblemInstance build_problem(const ExperimentConfig& config);

/// Optimizer described by the config, started at w0.
std::unique_ptr<Optimizer> make_optimizer(const ExperimentConfig& config,
                                          DenseVector w0, Rng rng);

// ---------------------------------------------------------------------------

struct ReferenceSolution {
  DenseVector w;
  double f = 0.0;
  double grad_norm_sq = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Newton-CG with Armijo backtracking until ||grad F||^2 <= grad_tol_sq or
/// max_iter outer iterations; diagonal quadratics are solved in closed form.
/// Throws std::invalid_argument for problems that are not strongly convex.
ReferenceSolution reference_solve(const Objective& problem,
                                  double grad_tol_sq = 1e-16,
                                  std::size_t max_iter = 500);

// ---------------------------------------------------------------------------

/// One logged iterate. Unavailable metrics are NaN.
struct RunRow {
  std::uint64_t seed = 0;
  std::size_t k = 0;
  double effective_passes = 0.0;
  double loss = 0.0;
  double optimality_gap = 0.0;
  double grad_norm_sq = 0.0;
  double test_accuracy = 0.0;
  double eta = 0.0;
  double dhat_min = 0.0;
  double dhat_max = 0.0;
  double psi = 0.0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string method;
  std::vector<RunRow> rows;
  bool aborted = false;
  std::string abort_message;
};

/// Lyapunov value of the adaptive rule after step k:
/// ||w_{k+1} - w*||^2_D + 1/2 ||w_{k+1} - w_k||^2_D + 2 eta (1 + theta) (F(w_k) - F*).
double lyapunov_psi(std::span<const double> w_next, std::span<const double> w,
                    std::span<const double> w_star,
                    std::span<const double> d_hat, double eta, double theta,
                    double f_w, double f_star);

/// Smallest beta2 for which the linear contraction of the adaptive rule's
/// Lyapunov function is guaranteed, given (alpha, mu, L, Gamma).
double psi_beta2_threshold(double alpha, double mu, double L, double gamma);

/// Runs every seed of the config. Seeds may execute on parallel workers
/// (OASIS_THREADS caps the count); records come back in seed order.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config);

/// Same, on an already-built problem with an optional reference solution.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config,
                                      const ProblemInstance& problem,
                                      const std::optional<ReferenceSolution>& ref);

inline constexpr const char* kRunCsvHeader =
    "seed,k,effective_passes,loss,optimality_gap,grad_norm_sq,test_accuracy,"
    "eta,dhat_min,dhat_max,psi";

void write_csv(std::ostream& out, const std::vector<RunRecord>& records);
void emit_csv(const std::vector<RunRecord>& records,
              const std::filesystem::path& path);
/// Inverse of write_csv (records grouped by seed, method left empty).
std::vector<RunRecord> read_csv(std::istream& in);

/// Line chart of `metric` against effective passes, one polyline per record.
/// Gap and squared-gradient metrics use a log10 y axis.
void write_svg_plot(std::ostream& out, const std::vector<RunRecord>& records,
                    const std::string& metric);
void emit_svg_plot(const std::vector<RunRecord>& records,
                   const std::string& metric,
                   const std::filesystem::path& path);

/// Column value by CSV name; throws std::invalid_argument for unknown names.
double metric_value(const RunRow& row, const std::string& metric);

// ---------------------------------------------------------------------------

/// Diagonal-estimation fidelity on a random symmetric matrix.
struct FidelityResult {
  DenseVector true_diag;
  /// Relative l2 error per iteration of: the running mean of Hutchinson
  /// samples; the clamped, bias-corrected EMA |D| against |diag|; and the
  /// square root of the bias-corrected EMA of squared samples against |diag|.
  std::vector<double> hutchinson_error;
  std::vector<double> oasis_error;
  std::vector<double> adahessian_error;
  /// Final estimates (per-coordinate scale scatter).
  DenseVector hutchinson_diag;
  DenseVector oasis_diag;
  DenseVector adahessian_diag;
};

/// A = (G + G^T) / 2 with G i.i.d. standard normal.
DenseVector random_symmetric_matrix(std::size_t dim, Rng& rng);

FidelityResult diag_fidelity_experiment(std::size_t dim, std::size_t iters,
                                        double beta2, Rng& rng,
                                        double alpha = 1e-8);

/// Same experiment on a caller-supplied symmetric row-major matrix.
FidelityResult diag_fidelity_experiment(std::span<const double> matrix,
                                        std::size_t dim, std::size_t iters,
                                        double beta2, Rng& rng,
                                        double alpha = 1e-8);

void write_fidelity_csv(std::ostream& errors, std::ostream& scatter,
                        const FidelityResult& result);

/// Worker count: OASIS_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

}  // namespace oasis
