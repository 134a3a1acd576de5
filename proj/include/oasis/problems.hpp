#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oasis/estimator.hpp"
#include "oasis/linalg.hpp"

namespace oasis {

/// Global curvature constants: ||grad F(x) - grad F(y)|| <= L ||x - y|| and,
/// when strongly_convex, F is mu-strongly convex.
struct CurvatureBounds {
  double L = 0.0;
  double mu = 0.0;
  bool strongly_convex = false;
};

/// Finite-sum objective F(w) = 1/n sum_i f_i(w) (+ regulariser).
///
/// Every evaluation accepts an optional batch; the batched value is the
/// average over the batch rows, so batch == full set reproduces the full
/// objective.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t n_samples() const = 0;

  virtual double value(std::span<const double> w,
                       const Batch& batch = std::nullopt) const = 0;
  virtual DenseVector gradient(std::span<const double> w,
                               const Batch& batch = std::nullopt) const = 0;
  virtual DenseVector hvp(std::span<const double> w, std::span<const double> v,
                          const Batch& batch = std::nullopt) const = 0;

  /// Upper bound on L and (when available) the strong convexity modulus.
  virtual CurvatureBounds curvature_bounds() const = 0;

  /// Bound on |(z (.) H(w) z)_i| over all w, i and Rademacher z, via the
  /// largest absolute row sum of the Hessian.
  virtual double hutchinson_entry_bound() const = 0;

  virtual std::string name() const = 0;

  /// Oracle view over hvp(); the objective must outlive it.
  HvpOracle hvp_oracle() const;
};

/// Logistic sigmoid, evaluated branch-wise so neither branch overflows.
double sigmoid(double t);

/// log(1 + e^t) without overflow.
double softplus(double t);

/// sigma_max(X^T X) by power iteration; throws std::runtime_error if the
/// relative residual does not fall below `tol` within `max_iter` iterations.
double gram_spectral_norm(const CsrMatrix& x, double tol = 1e-8,
                          std::size_t max_iter = 10000);

/// (1/|B|) sum_i log(1 + exp(-y_i x_i^T w)) + lambda/2 ||w||^2, y in {-1,+1}.
class LogisticRegression final : public Objective {
 public:
  LogisticRegression(CsrMatrix x, DenseVector y, double lambda);

  std::size_t dim() const override { return x_.cols(); }
  std::size_t n_samples() const override { return x_.rows(); }
  double value(std::span<const double> w,
               const Batch& batch = std::nullopt) const override;
  DenseVector gradient(std::span<const double> w,
                       const Batch& batch = std::nullopt) const override;
  DenseVector hvp(std::span<const double> w, std::span<const double> v,
                  const Batch& batch = std::nullopt) const override;
  /// L = sigma_max(X^T X)/(4n) + lambda, mu = lambda.
  CurvatureBounds curvature_bounds() const override;
  /// max_i (1/4n) sum_r |x_ri| ||x_r||_1 + lambda
  double hutchinson_entry_bound() const override;
  std::string name() const override { return "logistic"; }

  const CsrMatrix& features() const { return x_; }
  const DenseVector& labels() const { return y_; }
  double lambda() const { return lambda_; }

 private:
  CsrMatrix x_;
  DenseVector y_;
  double lambda_;
};

/// (c/|B|) sum_i (y_i - sigmoid(x_i^T w))^2 with targets in {0,1}.
///
/// c = 1 by default; `half_scale` selects c = 1/2. Labels passed in as
/// +-1 are mapped to (y+1)/2 on construction.
class NonlinearLeastSquares final : public Objective {
 public:
  NonlinearLeastSquares(CsrMatrix x, DenseVector y_pm1,
                        bool half_scale = false);

  std::size_t dim() const override { return x_.cols(); }
  std::size_t n_samples() const override { return x_.rows(); }
  double value(std::span<const double> w,
               const Batch& batch = std::nullopt) const override;
  DenseVector gradient(std::span<const double> w,
                       const Batch& batch = std::nullopt) const override;
  DenseVector hvp(std::span<const double> w, std::span<const double> v,
                  const Batch& batch = std::nullopt) const override;
  /// Nonconvex: mu = 0 and L = c * sigma_max(X^T X)/(2n), from
  /// |d^2/dt^2 (y - sigmoid(t))^2| <= 1/2.
  CurvatureBounds curvature_bounds() const override;
  /// max_i (c/2n) sum_r |x_ri| ||x_r||_1
  double hutchinson_entry_bound() const override;
  std::string name() const override { return "nls"; }

  const CsrMatrix& features() const { return x_; }
  const DenseVector& targets() const { return y01_; }
  double scale() const { return scale_; }

 private:
  CsrMatrix x_;
  DenseVector y01_;
  double scale_;
};

/// F(w) = 1/2 w^T H w - b^T w with H symmetric (dense or diagonal).
class Quadratic final : public Objective {
 public:
  static Quadratic diagonal(DenseVector h_diag, DenseVector b);
  /// `h` is row-major d x d and must be symmetric.
  static Quadratic dense(std::size_t d, DenseVector h, DenseVector b);

  std::size_t dim() const override { return b_.size(); }
  std::size_t n_samples() const override { return 1; }
  double value(std::span<const double> w,
               const Batch& batch = std::nullopt) const override;
  DenseVector gradient(std::span<const double> w,
                       const Batch& batch = std::nullopt) const override;
  DenseVector hvp(std::span<const double> w, std::span<const double> v,
                  const Batch& batch = std::nullopt) const override;
  /// Exact extreme eigenvalues of H.
  CurvatureBounds curvature_bounds() const override;
  double hutchinson_entry_bound() const override;
  std::string name() const override { return "quadratic"; }

  bool is_diagonal() const { return diagonal_; }
  /// Row-major d x d copy of H.
  DenseVector hessian() const;
  DenseVector hessian_diagonal() const;
  const DenseVector& linear_term() const { return b_; }

 private:
  Quadratic(bool diagonal, DenseVector h, DenseVector b);
  bool diagonal_;
  DenseVector h_;
  DenseVector b_;
};

/// estimate_L_mu: curvature constants of a strongly convex problem.
/// Throws std::invalid_argument when the problem is not strongly convex.
CurvatureBounds estimate_L_mu(const Objective& problem);

/// `b` distinct indices drawn uniformly without replacement from [0, n).
std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, Rng& rng);

/// Fraction of rows whose sign(x_i^T w) (ties to +1) matches y_i in {-1,+1}.
double classification_accuracy(const CsrMatrix& x, std::span<const double> y,
                               std::span<const double> w);

}  // namespace oasis
