#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>

#include "oasis/linalg.hpp"

namespace oasis {

/// Row subset of the training set; std::nullopt means the full set.
using Batch = std::optional<std::span<const std::size_t>>;

/// Hessian-vector product oracle: (w, v, batch) -> H(w) v.
using HvpOracle = std::function<DenseVector(
    std::span<const double> w, std::span<const double> v, const Batch& batch)>;

/// Clamped diagonal preconditioner.
///
/// `d_raw` is the running (possibly signed) diagonal estimate and `d_hat`
/// the matrix actually used for scaling, `d_hat_i = max(|d_raw_i|, alpha)`.
struct DiagonalPreconditioner {
  DenseVector d_raw;
  DenseVector d_hat;
  double alpha = 1e-3;
  double beta2 = 0.99;

  double min_entry() const;
  double max_entry() const;
};

/// z (.) H(w) z for one Rademacher probe z.
DenseVector hutchinson_sample(const HvpOracle& hvp, std::span<const double> w,
                              std::span<const double> z,
                              const Batch& batch = std::nullopt);

/// beta2 * prev + (1 - beta2) * sample.
DenseVector ema_update(std::span<const double> prev,
                       std::span<const double> sample, double beta2);

/// max(|d_i|, alpha) elementwise. Throws if alpha <= 0.
DenseVector clamp(std::span<const double> d, double alpha);

/// Plain average of `samples` Hutchinson estimates at w0.
DenseVector warmstart(const HvpOracle& hvp, std::span<const double> w0,
                      std::size_t samples, Rng& rng,
                      const Batch& batch = std::nullopt);

/// Undo the zero-initialisation bias of an EMA after k+1 updates:
/// d / (1 - beta2^(k+1)). beta2 must lie in [0, 1).
DenseVector bias_correct(std::span<const double> d, double beta2,
                         std::size_t k);

// ---------------------------------------------------------------------------
// Second-moment preconditioners of the gradient-scaling baselines.

enum class MomentKind { adagrad, rmsprop, adam, adahessian };

/// Accumulates squared inputs (gradients, or Hutchinson samples for
/// AdaHessian) and reports the square-root diagonal. The epsilon of the
/// update rule is not included; callers add it after the square root.
class SecondMomentAccumulator {
 public:
  SecondMomentAccumulator(MomentKind kind, std::size_t dim, double beta2);

  /// Feeds one gradient (or Hutchinson sample) and returns the new diagonal.
  const DenseVector& update(std::span<const double> x);

  const DenseVector& diagonal() const { return diag_; }
  std::size_t steps() const { return steps_; }
  MomentKind kind() const { return kind_; }

 private:
  MomentKind kind_;
  double beta2_;
  std::size_t steps_ = 0;
  DenseVector acc_;
  DenseVector diag_;
};

}  // namespace oasis
