#include "oasis/problems.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oasis {

namespace {

// Calls fn(row) for every row of the batch (all rows when batch is empty)
// and returns 1/|B|.
template <typename Fn>
double for_each_row(const Batch& batch, std::size_t n, Fn&& fn) {
  if (batch) {
    if (batch->empty()) throw std::invalid_argument("empty batch");
    for (std::size_t r : *batch) {
      if (r >= n) throw std::out_of_range("batch index out of range");
      fn(r);
    }
    return 1.0 / static_cast<double>(batch->size());
  }
  for (std::size_t r = 0; r < n; ++r) fn(r);
  return 1.0 / static_cast<double>(n);
}

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw DimensionError(std::string(what) + ": expected dimension " +
                         std::to_string(want) + ", got " + std::to_string(got));
}

// Adds coef * x_r to out.
void add_row(const CsrMatrix& x, std::size_t r, double coef,
             std::span<double> out) {
  auto cols = x.row_cols(r);
  auto vals = x.row_values(r);
  for (std::size_t p = 0; p < cols.size(); ++p) out[cols[p]] += coef * vals[p];
}

// max_i sum_r |x_ri| ||x_r||_1, the largest row sum of |X|^T |X|.
double max_abs_gram_row_sum(const CsrMatrix& x) {
  DenseVector col_bound(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double row_l1 = 0.0;
    for (double v : x.row_values(r)) row_l1 += std::abs(v);
    auto cols = x.row_cols(r);
    auto vals = x.row_values(r);
    for (std::size_t p = 0; p < cols.size(); ++p)
      col_bound[cols[p]] += std::abs(vals[p]) * row_l1;
  }
  return col_bound.empty()
             ? 0.0
             : *std::max_element(col_bound.begin(), col_bound.end());
}

}  // namespace

HvpOracle Objective::hvp_oracle() const {
  return [this](std::span<const double> w, std::span<const double> v,
                const Batch& batch) { return hvp(w, v, batch); };
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

double gram_spectral_norm(const CsrMatrix& x, double tol,
                          std::size_t max_iter) {
  const std::size_t d = x.cols();
  if (d == 0 || x.nnz() == 0) return 0.0;
  Rng rng(0x5eed);
  DenseVector v = standard_normal(d, rng);
  double nv = norm2(v);
  for (double& e : v) e /= nv;
  for (std::size_t it = 0; it < max_iter; ++it) {
    DenseVector av = spmv_t(x, spmv(x, v));
    const double lambda = dot(v, av);
    if (lambda <= 0.0) return 0.0;
    DenseVector r = av;
    axpy(-lambda, v, r);
    const double n_av = norm2(av);
    if (norm2(r) <= tol * lambda) return lambda;
    for (std::size_t i = 0; i < d; ++i) v[i] = av[i] / n_av;
  }
  throw std::runtime_error("gram_spectral_norm: power iteration did not converge");
}

// ---------------------------------------------------------------------------

LogisticRegression::LogisticRegression(CsrMatrix x, DenseVector y,
                                       double lambda)
    : x_(std::move(x)), y_(std::move(y)), lambda_(lambda) {
  if (y_.size() != x_.rows())
    throw DimensionError("LogisticRegression: label count != row count");
  if (x_.rows() == 0)
    throw std::invalid_argument("LogisticRegression: no samples");
  if (!(lambda_ >= 0.0))
    throw std::invalid_argument("LogisticRegression: lambda must be >= 0");
  for (double yi : y_)
    if (yi != 1.0 && yi != -1.0)
      throw std::invalid_argument("LogisticRegression: labels must be +-1");
}

double LogisticRegression::value(std::span<const double> w,
                                 const Batch& batch) const {
  check_dim(w.size(), dim(), "LogisticRegression::value");
  double sum = 0.0;
  const double inv = for_each_row(batch, n_samples(), [&](std::size_t r) {
    sum += softplus(-y_[r] * x_.row_dot(r, w));
  });
  return inv * sum + 0.5 * lambda_ * squared_norm(w);
}

DenseVector LogisticRegression::gradient(std::span<const double> w,
                                         const Batch& batch) const {
  check_dim(w.size(), dim(), "LogisticRegression::gradient");
  DenseVector g(dim(), 0.0);
  const double inv = for_each_row(batch, n_samples(), [&](std::size_t r) {
    const double margin = y_[r] * x_.row_dot(r, w);
    add_row(x_, r, -y_[r] * sigmoid(-margin), g);
  });
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = inv * g[i] + lambda_ * w[i];
  return g;
}

DenseVector LogisticRegression::hvp(std::span<const double> w,
                                    std::span<const double> v,
                                    const Batch& batch) const {
  check_dim(w.size(), dim(), "LogisticRegression::hvp");
  check_dim(v.size(), dim(), "LogisticRegression::hvp");
  DenseVector out(dim(), 0.0);
  // (1) X v, (2) scale by sigma(t)(1 - sigma(t)), (3) X^T of the result.
  const double inv = for_each_row(batch, n_samples(), [&](std::size_t r) {
    const double xv = x_.row_dot(r, v);
    if (xv == 0.0) return;
    const double s = sigmoid(x_.row_dot(r, w));
    add_row(x_, r, s * (1.0 - s) * xv, out);
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = inv * out[i] + lambda_ * v[i];
  return out;
}

double LogisticRegression::hutchinson_entry_bound() const {
  return 0.25 * max_abs_gram_row_sum(x_) / static_cast<double>(n_samples()) +
         lambda_;
}

CurvatureBounds LogisticRegression::curvature_bounds() const {
  const double smax = gram_spectral_norm(x_);
  return {smax / (4.0 * static_cast<double>(n_samples())) + lambda_, lambda_,
          lambda_ > 0.0};
}

// ---------------------------------------------------------------------------

NonlinearLeastSquares::NonlinearLeastSquares(CsrMatrix x, DenseVector y_pm1,
                                             bool half_scale)
    : x_(std::move(x)), scale_(half_scale ? 0.5 : 1.0) {
  if (y_pm1.size() != x_.rows())
    throw DimensionError("NonlinearLeastSquares: label count != row count");
  if (x_.rows() == 0)
    throw std::invalid_argument("NonlinearLeastSquares: no samples");
  y01_.reserve(y_pm1.size());
  for (double yi : y_pm1) {
    if (yi != 1.0 && yi != -1.0)
      throw std::invalid_argument("NonlinearLeastSquares: labels must be +-1");
    y01_.push_back((yi + 1.0) / 2.0);
  }
}

double NonlinearLeastSquares::value(std::span<const double> w,
                                    const Batch& batch) const {
  check_dim(w.size(), dim(), "NonlinearLeastSquares::value");
  double sum = 0.0;
  const double inv = for_each_row(batch, n_samples(), [&](std::size_t r) {
    const double res = y01_[r] - sigmoid(x_.row_dot(r, w));
    sum += res * res;
  });
  return scale_ * inv * sum;
}

DenseVector NonlinearLeastSquares::gradient(std::span<const double> w,
                                            const Batch& batch) const {
  check_dim(w.size(), dim(), "NonlinearLeastSquares::gradient");
  DenseVector g(dim(), 0.0);
  const double inv = for_each_row(batch, n_samples(), [&](std::size_t r) {
    const double phi = sigmoid(x_.row_dot(r, w));
    add_row(x_, r, -2.0 * (y01_[r] - phi) * phi * (1.0 - phi), g);
  });
  for (double& gi : g) gi *= scale_ * inv;
  return g;
}

DenseVector NonlinearLeastSquares::hvp(std::span<const double> w,
                                       std::span<const double> v,
                                       const Batch& batch) const {
  check_dim(w.size(), dim(), "NonlinearLeastSquares::hvp");
  check_dim(v.size(), dim(), "NonlinearLeastSquares::hvp");
  DenseVector out(dim(), 0.0);
  const double inv = for_each_row(batch, n_samples(), [&](std::size_t r) {
    const double xv = x_.row_dot(r, v);
    if (xv == 0.0) return;
    const double phi = sigmoid(x_.row_dot(r, w));
    const double y = y01_[r];
    const double weight =
        phi * (1.0 - phi) * (y - 2.0 * (1.0 + y) * phi + 3.0 * phi * phi);
    add_row(x_, r, -2.0 * weight * xv, out);
  });
  for (double& o : out) o *= scale_ * inv;
  return out;
}

CurvatureBounds NonlinearLeastSquares::curvature_bounds() const {
  const double smax = gram_spectral_norm(x_);
  return {scale_ * smax / (2.0 * static_cast<double>(n_samples())), 0.0, false};
}

double NonlinearLeastSquares::hutchinson_entry_bound() const {
  return scale_ * 0.5 * max_abs_gram_row_sum(x_) /
         static_cast<double>(n_samples());
}

// ---------------------------------------------------------------------------

Quadratic::Quadratic(bool diagonal, DenseVector h, DenseVector b)
    : diagonal_(diagonal), h_(std::move(h)), b_(std::move(b)) {}

Quadratic Quadratic::diagonal(DenseVector h_diag, DenseVector b) {
  check_dim(h_diag.size(), b.size(), "Quadratic::diagonal");
  return Quadratic(true, std::move(h_diag), std::move(b));
}

Quadratic Quadratic::dense(std::size_t d, DenseVector h, DenseVector b) {
  check_dim(b.size(), d, "Quadratic::dense");
  check_dim(h.size(), d * d, "Quadratic::dense");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (h[i * d + j] != h[j * d + i])
        throw std::invalid_argument("Quadratic::dense: H must be symmetric");
  return Quadratic(false, std::move(h), std::move(b));
}

DenseVector Quadratic::hvp(std::span<const double> /*w*/,
                           std::span<const double> v,
                           const Batch& /*batch*/) const {
  const std::size_t d = dim();
  check_dim(v.size(), d, "Quadratic::hvp");
  DenseVector out(d, 0.0);
  if (diagonal_) {
    for (std::size_t i = 0; i < d; ++i) out[i] = h_[i] * v[i];
  } else {
    for (std::size_t i = 0; i < d; ++i)
      out[i] = dot(std::span<const double>(h_).subspan(i * d, d), v);
  }
  return out;
}

double Quadratic::value(std::span<const double> w, const Batch& batch) const {
  check_dim(w.size(), dim(), "Quadratic::value");
  return 0.5 * dot(w, hvp(w, w, batch)) - dot(b_, w);
}

DenseVector Quadratic::gradient(std::span<const double> w,
                                const Batch& batch) const {
  check_dim(w.size(), dim(), "Quadratic::gradient");
  DenseVector g = hvp(w, w, batch);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= b_[i];
  return g;
}

CurvatureBounds Quadratic::curvature_bounds() const {
  double lo = 0.0;
  double hi = 0.0;
  if (diagonal_) {
    auto [mn, mx] = std::minmax_element(h_.begin(), h_.end());
    lo = *mn;
    hi = *mx;
  } else {
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::Map<const Eigen::MatrixXd> h(h_.data(), d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
    lo = es.eigenvalues().minCoeff();
    hi = es.eigenvalues().maxCoeff();
  }
  return {std::max(std::abs(lo), std::abs(hi)), std::max(lo, 0.0), lo > 0.0};
}

double Quadratic::hutchinson_entry_bound() const {
  const std::size_t d = dim();
  double m = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    if (diagonal_)
      row = std::abs(h_[i]);
    else
      for (std::size_t j = 0; j < d; ++j) row += std::abs(h_[i * d + j]);
    m = std::max(m, row);
  }
  return m;
}

DenseVector Quadratic::hessian() const {
  if (!diagonal_) return h_;
  const std::size_t d = dim();
  DenseVector out(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) out[i * d + i] = h_[i];
  return out;
}

DenseVector Quadratic::hessian_diagonal() const {
  if (diagonal_) return h_;
  const std::size_t d = dim();
  DenseVector out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = h_[i * d + i];
  return out;
}

// ---------------------------------------------------------------------------

CurvatureBounds estimate_L_mu(const Objective& problem) {
  CurvatureBounds cb = problem.curvature_bounds();
  if (!cb.strongly_convex)
    throw std::invalid_argument("estimate_L_mu: " + problem.name() +
                                " problem is not strongly convex");
  return cb;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, Rng& rng) {
  if (b == 0 || b > n)
    throw std::invalid_argument("sample_batch: need 1 <= b <= n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(b);
  return idx;
}

double classification_accuracy(const CsrMatrix& x, std::span<const double> y,
                               std::span<const double> w) {
  check_dim(y.size(), x.rows(), "classification_accuracy");
  if (x.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double pred = x.row_dot(r, w) >= 0.0 ? 1.0 : -1.0;
    if (pred == y[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

}  // namespace oasis
