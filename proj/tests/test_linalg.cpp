#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oasis/linalg.hpp"

using namespace oasis;

namespace {

// Random sparse matrix with roughly `density` of the entries filled.
CsrMatrix random_sparse(std::size_t rows, std::size_t cols, double density,
                        Rng& rng, DenseVector* dense_out) {
  DenseVector dense(rows * cols, 0.0);
  for (auto& v : dense)
    if (rng.uniform() < density) v = rng.normal();
  if (dense_out) *dense_out = dense;
  return CsrMatrix::from_dense(rows, cols, dense);
}

}  // namespace

TEST_CASE("weighted norms") {
  CHECK(weighted_norm(DenseVector{3, 4}, DenseVector{1, 1}) == doctest::Approx(5.0));
  CHECK(weighted_norm(DenseVector{1, 2}, DenseVector{4, 1}) ==
        doctest::Approx(std::sqrt(8.0)).epsilon(1e-15));
  CHECK(weighted_norm(DenseVector{0, 0}, DenseVector{7, 0.5}) == 0.0);
  CHECK(weighted_dual_norm(DenseVector{1, 2}, DenseVector{4, 1}) ==
        doctest::Approx(std::sqrt(4.25)).epsilon(1e-15));
  CHECK(weighted_dual_norm(DenseVector{3, 4}, DenseVector{1, 1}) ==
        doctest::Approx(5.0));

  CHECK_THROWS_AS(weighted_norm(DenseVector{1, 2}, DenseVector{1}), DimensionError);
  CHECK_THROWS_AS(weighted_dual_norm(DenseVector{1}, DenseVector{1, 2}),
                  DimensionError);
}

TEST_CASE("weighted norm properties on random vectors") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.below(12);
    DenseVector x = standard_normal(d, rng);
    DenseVector diag(d), inv(d), ones(d, 1.0);
    for (std::size_t i = 0; i < d; ++i) {
      diag[i] = 0.01 + 10.0 * rng.uniform();
      inv[i] = 1.0 / diag[i];
    }
    CHECK(weighted_norm(x, ones) == doctest::Approx(norm2(x)).epsilon(1e-14));
    CHECK(weighted_dual_norm(x, diag) ==
          doctest::Approx(weighted_norm(x, inv)).epsilon(1e-14));
    // Cauchy-Schwarz between the norm and its dual.
    CHECK(weighted_norm(x, diag) * weighted_dual_norm(x, diag) >=
          dot(x, x) * (1 - 1e-14));
  }
}

TEST_CASE("vector helpers") {
  DenseVector y{1, 1};
  axpy(2.0, DenseVector{1, -1}, y);
  CHECK(y == DenseVector{3, -1});
  CHECK(subtract(DenseVector{3, 2}, DenseVector{1, 1}) == DenseVector{2, 1});
  CHECK(hadamard(DenseVector{2, 3}, DenseVector{-1, 4}) == DenseVector{-2, 12});
  CHECK(inf_norm(DenseVector{1, -7, 3}) == 7.0);
  CHECK(max_abs_diff(DenseVector{1, 2}, DenseVector{1.5, 0}) == 2.0);
  CHECK(all_finite(DenseVector{1, 2}));
  CHECK_FALSE(all_finite(DenseVector{1, NAN}));
  CHECK_FALSE(all_finite(DenseVector{INFINITY}));
  CHECK_THROWS_AS(dot(DenseVector{1}, DenseVector{1, 2}), DimensionError);
}

TEST_CASE("csr construction validates structure") {
  CsrMatrix a(2, 2, {0, 1, 2}, {0, 1}, {1, 2});
  CHECK(a.nnz() == 2);
  CHECK_THROWS(CsrMatrix(2, 2, {0, 1}, {0}, {1}));            // offsets length
  CHECK_THROWS(CsrMatrix(2, 2, {0, 2, 1}, {0, 1}, {1, 2}));   // decreasing
  CHECK_THROWS(CsrMatrix(1, 2, {0, 2}, {1, 0}, {1, 2}));      // column order
  CHECK_THROWS(CsrMatrix(1, 2, {0, 2}, {1, 1}, {1, 2}));      // duplicate
  CHECK_THROWS(CsrMatrix(1, 2, {0, 1}, {2}, {1}));            // out of range
  CHECK_THROWS(CsrMatrix(1, 2, {0, 1}, {0}, {1, 2}));         // nnz mismatch
}

TEST_CASE("spmv examples") {
  CsrMatrix a(2, 2, {0, 1, 2}, {0, 1}, {1, 2});
  CHECK(spmv(a, DenseVector{3, 4}) == DenseVector{3, 8});
  CHECK(spmv_t(a, DenseVector{3, 4}) == DenseVector{3, 8});

  CsrMatrix gap(3, 2, {0, 1, 1, 2}, {1, 0}, {5, -1});
  CHECK(spmv(gap, DenseVector{1, 1}) == DenseVector{5, 0, -1});
  CHECK_THROWS_AS(spmv(gap, DenseVector{1, 1, 1}), DimensionError);
  CHECK_THROWS_AS(spmv_t(gap, DenseVector{1, 1}), DimensionError);
}

TEST_CASE("spmv agrees with a dense product") {
  Rng rng(3);
  DenseVector dense;
  const CsrMatrix a = random_sparse(20, 30, 0.3, rng, &dense);
  const DenseVector v = standard_normal(30, rng);
  const DenseVector u = standard_normal(20, rng);

  DenseVector av(20, 0.0), atu(30, 0.0);
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < 30; ++c) {
      av[r] += dense[r * 30 + c] * v[c];
      atu[c] += dense[r * 30 + c] * u[r];
    }
  CHECK(max_abs_diff(spmv(a, v), av) <= 1e-12);
  CHECK(max_abs_diff(spmv_t(a, u), atu) <= 1e-12);
  CHECK(a.to_dense() == dense);
}

TEST_CASE("gram form is nonnegative") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const CsrMatrix a = random_sparse(8, 6, 0.4, rng, nullptr);
    const DenseVector v = standard_normal(6, rng);
    CHECK(dot(spmv_t(a, spmv(a, v)), v) >= -1e-12);
  }
}

TEST_CASE("row selection and column padding") {
  CsrMatrix a(3, 2, {0, 1, 1, 2}, {1, 0}, {5, -1});
  const std::vector<std::size_t> pick{2, 0};
  const CsrMatrix s = a.select_rows(pick);
  CHECK(s.rows() == 2);
  CHECK(s.to_dense() == DenseVector{-1, 0, 0, 5});
  const CsrMatrix w = a.with_cols(4);
  CHECK(w.cols() == 4);
  CHECK(w.nnz() == a.nnz());
  CHECK_THROWS(a.with_cols(1));
}

TEST_CASE("rng is deterministic and streams differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // Reference SplitMix64 output for seed 0.
  Rng z(0);
  CHECK(z.next_u64() == 0xe220a8397b1dcdafULL);

  Rng base(9);
  Rng s1 = base.fork(1), s2 = base.fork(2);
  int same = 0;
  for (int i = 0; i < 16; ++i) same += s1.next_u64() == s2.next_u64();
  CHECK(same < 16);

  Rng parent(9);
  const auto before = parent.state();
  (void)parent.fork(3);
  CHECK(parent.state() == before);
  Rng c1 = parent.split();
  Rng c2 = parent.split();
  CHECK(c1.next_u64() != c2.next_u64());

  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("rademacher support, determinism and balance") {
  Rng r(17);
  const DenseVector z = rademacher(5, r);
  for (double v : z) CHECK((v == 1.0 || v == -1.0));

  Rng a(8), b(8);
  CHECK(rademacher(130, a) == rademacher(130, b));

  const std::size_t dim = 70, draws = 100000;
  DenseVector mean(dim, 0.0);
  Rng m(123);
  for (std::size_t t = 0; t < draws; ++t) axpy(1.0 / draws, rademacher(dim, m), mean);
  CHECK(inf_norm(mean) <= 0.02);
}
