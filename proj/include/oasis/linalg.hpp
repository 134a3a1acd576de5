#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace oasis {

/// Dense 64-bit vector. Iterates, gradients, diagonals and probes all use it.
using DenseVector = std::vector<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Dense vector helpers

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> x);
double squared_norm(std::span<const double> x);
double inf_norm(std::span<const double> x);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
DenseVector add(std::span<const double> a, std::span<const double> b);
DenseVector subtract(std::span<const double> a, std::span<const double> b);
DenseVector scaled(double a, std::span<const double> x);
DenseVector hadamard(std::span<const double> a, std::span<const double> b);

bool all_finite(std::span<const double> x);

/// sqrt(sum_i diag_i x_i^2). `diag` must be entrywise positive.
double weighted_norm(std::span<const double> x, std::span<const double> diag);

/// Dual of weighted_norm for a diagonal weight: sqrt(sum_i x_i^2 / diag_i).
double weighted_dual_norm(std::span<const double> x,
                          std::span<const double> diag);

// ---------------------------------------------------------------------------
// Compressed sparse row matrix

class CsrMatrix {
 public:
  CsrMatrix() = default;

  /// Validates the structure: offsets nondecreasing with offsets[0] == 0 and
  /// offsets.back() == nnz, column indices strictly increasing within a row
  /// and below n_cols.
  CsrMatrix(std::size_t n_rows, std::size_t n_cols,
            std::vector<std::size_t> row_offsets,
            std::vector<std::size_t> col_indices, std::vector<double> values);

  /// Builds from a row-major dense array, dropping exact zeros.
  static CsrMatrix from_dense(std::size_t n_rows, std::size_t n_cols,
                              std::span<const double> row_major);

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return n_cols_; }
  std::size_t nnz() const { return values_.size(); }

  const std::vector<std::size_t>& row_offsets() const { return offsets_; }
  const std::vector<std::size_t>& col_indices() const { return cols_idx_; }
  const std::vector<double>& values() const { return values_; }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {cols_idx_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

  /// x_r . v for a single row.
  double row_dot(std::size_t r, std::span<const double> v) const;

  /// Copy of the matrix with `n_cols` columns (must be >= cols()).
  CsrMatrix with_cols(std::size_t n_cols) const;

  /// Rows selected in the given order.
  CsrMatrix select_rows(std::span<const std::size_t> rows) const;

  DenseVector to_dense() const;

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> cols_idx_;
  std::vector<double> values_;
};

/// A * v
DenseVector spmv(const CsrMatrix& a, std::span<const double> v);
/// A^T * v
DenseVector spmv_t(const CsrMatrix& a, std::span<const double> v);

// ---------------------------------------------------------------------------
// Random numbers

/// SplitMix64 stream. The same seed produces the same 64-bit words on every
/// platform, and so do uniform(), below() and rademacher(). normal() goes
/// through libm log/cos and is reproducible per platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller (the spare is cached).
  double normal();

  /// Uniform integer in [0, bound) by rejection, bound >= 1.
  std::uint64_t below(std::uint64_t bound);

  /// Independent child stream; the parent advances by one word.
  Rng split();

  /// Child stream keyed by `stream_id` without advancing the parent.
  Rng fork(std::uint64_t stream_id) const;

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Vector of i.i.d. +-1 entries, one 64-bit word per 64 coordinates.
DenseVector rademacher(std::size_t dim, Rng& rng);

DenseVector standard_normal(std::size_t dim, Rng& rng);

}  // namespace oasis
