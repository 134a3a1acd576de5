#include "oasis/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace oasis {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" +
                         std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> x) { return dot(x, x); }

double norm2(std::span<const double> x) { return std::sqrt(squared_norm(x)); }

double inf_norm(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

DenseVector add(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "add");
  DenseVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

DenseVector subtract(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "subtract");
  DenseVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

DenseVector scaled(double a, std::span<const double> x) {
  DenseVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i];
  return out;
}

DenseVector hadamard(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "hadamard");
  DenseVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(),
                     [](double v) { return std::isfinite(v); });
}

double weighted_norm(std::span<const double> x, std::span<const double> diag) {
  require_same_size(x.size(), diag.size(), "weighted_norm");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += diag[i] * x[i] * x[i];
  return std::sqrt(s);
}

double weighted_dual_norm(std::span<const double> x,
                          std::span<const double> diag) {
  require_same_size(x.size(), diag.size(), "weighted_dual_norm");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i] / diag[i];
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

CsrMatrix::CsrMatrix(std::size_t n_rows, std::size_t n_cols,
                     std::vector<std::size_t> row_offsets,
                     std::vector<std::size_t> col_indices,
                     std::vector<double> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      offsets_(std::move(row_offsets)),
      cols_idx_(std::move(col_indices)),
      values_(std::move(values)) {
  if (offsets_.size() != n_rows_ + 1)
    throw std::invalid_argument("CsrMatrix: offsets must have n_rows+1 entries");
  if (cols_idx_.size() != values_.size())
    throw std::invalid_argument("CsrMatrix: column/value length mismatch");
  if (offsets_.front() != 0 || offsets_.back() != values_.size())
    throw std::invalid_argument("CsrMatrix: offsets must span [0, nnz]");
  for (std::size_t r = 0; r < n_rows_; ++r) {
    if (offsets_[r + 1] < offsets_[r])
      throw std::invalid_argument("CsrMatrix: offsets must be nondecreasing");
    for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
      if (cols_idx_[p] >= n_cols_)
        throw std::invalid_argument("CsrMatrix: column index out of range");
      if (p > offsets_[r] && cols_idx_[p] <= cols_idx_[p - 1])
        throw std::invalid_argument(
            "CsrMatrix: column indices must increase within a row");
    }
  }
}

CsrMatrix CsrMatrix::from_dense(std::size_t n_rows, std::size_t n_cols,
                                std::span<const double> row_major) {
  require_same_size(row_major.size(), n_rows * n_cols, "CsrMatrix::from_dense");
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      double v = row_major[r * n_cols + c];
      if (v != 0.0) {
        cols.push_back(c);
        vals.push_back(v);
      }
    }
    offsets.push_back(vals.size());
  }
  return {n_rows, n_cols, std::move(offsets), std::move(cols), std::move(vals)};
}

double CsrMatrix::row_dot(std::size_t r, std::span<const double> v) const {
  double s = 0.0;
  for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p)
    s += values_[p] * v[cols_idx_[p]];
  return s;
}

CsrMatrix CsrMatrix::with_cols(std::size_t n_cols) const {
  if (n_cols < n_cols_)
    throw std::invalid_argument("CsrMatrix::with_cols: cannot shrink");
  CsrMatrix out = *this;
  out.n_cols_ = n_cols;
  return out;
}

CsrMatrix CsrMatrix::select_rows(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  for (std::size_t r : rows) {
    if (r >= n_rows_) throw std::out_of_range("CsrMatrix::select_rows");
    auto rc = row_cols(r);
    auto rv = row_values(r);
    cols.insert(cols.end(), rc.begin(), rc.end());
    vals.insert(vals.end(), rv.begin(), rv.end());
    offsets.push_back(vals.size());
  }
  return {rows.size(), n_cols_, std::move(offsets), std::move(cols),
          std::move(vals)};
}

DenseVector CsrMatrix::to_dense() const {
  DenseVector out(n_rows_ * n_cols_, 0.0);
  for (std::size_t r = 0; r < n_rows_; ++r)
    for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p)
      out[r * n_cols_ + cols_idx_[p]] = values_[p];
  return out;
}

DenseVector spmv(const CsrMatrix& a, std::span<const double> v) {
  require_same_size(a.cols(), v.size(), "spmv");
  DenseVector out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = a.row_dot(r, v);
  return out;
}

DenseVector spmv_t(const CsrMatrix& a, std::span<const double> v) {
  require_same_size(a.rows(), v.size(), "spmv_t");
  DenseVector out(a.cols(), 0.0);
  const auto& offsets = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double vr = v[r];
    if (vr == 0.0) continue;
    for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p)
      out[cols[p]] += vals[p] * vr;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u1 = 0.0;
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be >= 1");
  // Reject the partial top bucket so every residue is equally likely.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  std::uint64_t x = next_u64();
  while (x > limit) x = next_u64();
  return x % bound;
}

Rng Rng::split() { return Rng(next_u64()); }

Rng Rng::fork(std::uint64_t stream_id) const {
  Rng tmp(state_ ^ (0xD1B54A32D192ED03ULL * (stream_id + 1)));
  return Rng(tmp.next_u64());
}

DenseVector rademacher(std::size_t dim, Rng& rng) {
  DenseVector z(dim);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    if (i % 64 == 0) word = rng.next_u64();
    z[i] = (word >> (i % 64)) & 1U ? 1.0 : -1.0;
  }
  return z;
}

DenseVector standard_normal(std::size_t dim, Rng& rng) {
  DenseVector out(dim);
  for (double& v : out) v = rng.normal();
  return out;
}

}  // namespace oasis
