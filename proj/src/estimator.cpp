#include "oasis/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oasis {

double DiagonalPreconditioner::min_entry() const {
  return d_hat.empty() ? 0.0 : *std::min_element(d_hat.begin(), d_hat.end());
}

double DiagonalPreconditioner::max_entry() const {
  return d_hat.empty() ? 0.0 : *std::max_element(d_hat.begin(), d_hat.end());
}

DenseVector hutchinson_sample(const HvpOracle& hvp, std::span<const double> w,
                              std::span<const double> z, const Batch& batch) {
  if (w.size() != z.size())
    throw DimensionError("hutchinson_sample: probe dimension mismatch");
  DenseVector hz = hvp(w, z, batch);
  if (hz.size() != z.size())
    throw DimensionError("hutchinson_sample: oracle returned wrong dimension");
  for (std::size_t i = 0; i < hz.size(); ++i) hz[i] *= z[i];
  return hz;
}

DenseVector ema_update(std::span<const double> prev,
                       std::span<const double> sample, double beta2) {
  if (prev.size() != sample.size())
    throw DimensionError("ema_update: dimension mismatch");
  if (!(beta2 >= 0.0 && beta2 <= 1.0))
    throw std::invalid_argument("ema_update: beta2 must lie in [0, 1]");
  DenseVector out(prev.size());
  const double w_new = 1.0 - beta2;
  for (std::size_t i = 0; i < prev.size(); ++i)
    out[i] = beta2 * prev[i] + w_new * sample[i];
  return out;
}

DenseVector clamp(std::span<const double> d, double alpha) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("clamp: alpha must be positive");
  DenseVector out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    out[i] = std::max(std::abs(d[i]), alpha);
  return out;
}

DenseVector warmstart(const HvpOracle& hvp, std::span<const double> w0,
                      std::size_t samples, Rng& rng, const Batch& batch) {
  if (samples == 0)
    throw std::invalid_argument("warmstart: need at least one sample");
  DenseVector sum(w0.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const DenseVector z = rademacher(w0.size(), rng);
    const DenseVector v = hutchinson_sample(hvp, w0, z, batch);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(samples);
  for (double& x : sum) x *= inv;
  return sum;
}

DenseVector bias_correct(std::span<const double> d, double beta2,
                         std::size_t k) {
  if (!(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("bias_correct: beta2 must lie in [0, 1)");
  const double denom = 1.0 - std::pow(beta2, static_cast<double>(k + 1));
  DenseVector out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] / denom;
  return out;
}

// ---------------------------------------------------------------------------

SecondMomentAccumulator::SecondMomentAccumulator(MomentKind kind,
                                                 std::size_t dim, double beta2)
    : kind_(kind), beta2_(beta2), acc_(dim, 0.0), diag_(dim, 0.0) {
  if (kind != MomentKind::adagrad && !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument(
        "SecondMomentAccumulator: beta2 must lie in [0, 1)");
}

const DenseVector& SecondMomentAccumulator::update(std::span<const double> x) {
  if (x.size() != acc_.size())
    throw DimensionError("SecondMomentAccumulator: dimension mismatch");
  ++steps_;
  switch (kind_) {
    case MomentKind::adagrad:
      for (std::size_t i = 0; i < x.size(); ++i) {
        acc_[i] += x[i] * x[i];
        diag_[i] = std::sqrt(acc_[i]);
      }
      break;
    case MomentKind::rmsprop:
      // acc_ holds D_{k-1}^2; no bias correction.
      for (std::size_t i = 0; i < x.size(); ++i) {
        acc_[i] = beta2_ * acc_[i] + (1.0 - beta2_) * x[i] * x[i];
        diag_[i] = std::sqrt(acc_[i]);
      }
      break;
    case MomentKind::adam:
    case MomentKind::adahessian: {
      const double corr =
          1.0 - std::pow(beta2_, static_cast<double>(steps_));
      for (std::size_t i = 0; i < x.size(); ++i) {
        acc_[i] = beta2_ * acc_[i] + (1.0 - beta2_) * x[i] * x[i];
        diag_[i] = std::sqrt(acc_[i] / corr);
      }
      break;
    }
  }
  return diag_;
}

}  // namespace oasis
