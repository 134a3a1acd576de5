#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oasis/estimator.hpp"

using namespace oasis;

namespace {

// Oracle backed by an explicit row-major matrix.
HvpOracle matrix_oracle(DenseVector m, std::size_t d) {
  return [m = std::move(m), d](std::span<const double>, std::span<const double> v,
                               const Batch&) {
    DenseVector out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i] += m[i * d + j] * v[j];
    return out;
  };
}

DenseVector symmetric(std::size_t d, Rng& rng) {
  DenseVector a(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) a[i * d + j] = a[j * d + i] = rng.normal();
  return a;
}

DenseVector diag_of(const DenseVector& a, std::size_t d) {
  DenseVector out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = a[i * d + i];
  return out;
}

double rel_err(const DenseVector& est, const DenseVector& truth) {
  return norm2(subtract(est, truth)) / norm2(truth);
}

}  // namespace

TEST_CASE("hutchinson sample is exact on diagonal matrices") {
  const auto h = matrix_oracle({2, 0, 0, -3}, 2);
  const DenseVector w{0, 0};
  for (const DenseVector& z : {DenseVector{1, 1}, DenseVector{1, -1},
                               DenseVector{-1, 1}, DenseVector{-1, -1}})
    CHECK(hutchinson_sample(h, w, z) == DenseVector{2, -3});
}

TEST_CASE("hutchinson sample on the swap matrix averages to its diagonal") {
  const auto h = matrix_oracle({0, 1, 1, 0}, 2);
  const DenseVector w{0, 0};
  const DenseVector a = hutchinson_sample(h, w, DenseVector{1, 1});
  const DenseVector b = hutchinson_sample(h, w, DenseVector{1, -1});
  CHECK(a == DenseVector{1, 1});
  CHECK(b == DenseVector{-1, -1});
  CHECK(add(a, b) == DenseVector{0, 0});
}

TEST_CASE("hutchinson mean converges on a random symmetric matrix") {
  Rng mat_rng(2024);
  const std::size_t d = 10;
  const DenseVector a = symmetric(d, mat_rng);
  const auto h = matrix_oracle(a, d);
  const DenseVector w(d, 0.0);
  Rng rng(7);
  DenseVector mean(d, 0.0);
  const std::size_t samples = 200000;
  for (std::size_t t = 0; t < samples; ++t)
    axpy(1.0 / samples, hutchinson_sample(h, w, rademacher(d, rng)), mean);
  CHECK(rel_err(mean, diag_of(a, d)) <= 0.02);
}

TEST_CASE("hutchinson entries obey the absolute row-sum bound") {
  Rng rng(31);
  const std::size_t d = 12;
  const DenseVector a = symmetric(d, rng);
  double row_bound = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += std::abs(a[i * d + j]);
    row_bound = std::max(row_bound, s);
  }
  const auto h = matrix_oracle(a, d);
  for (int t = 0; t < 500; ++t)
    CHECK(inf_norm(hutchinson_sample(h, DenseVector(d, 0.0), rademacher(d, rng))) <=
          row_bound + 1e-12);
}

TEST_CASE("ema update") {
  CHECK(ema_update(DenseVector{1, 1}, DenseVector{3, 5}, 0.5) == DenseVector{2, 3});
  CHECK(ema_update(DenseVector{1, -2}, DenseVector{3, 5}, 1.0) == DenseVector{1, -2});
  CHECK(ema_update(DenseVector{1, -2}, DenseVector{3, 5}, 0.0) == DenseVector{3, 5});
}

TEST_CASE("clamp") {
  CHECK(clamp(DenseVector{0.5, -2, 0.01}, 0.1) == DenseVector{0.5, 2, 0.1});
  CHECK(clamp(DenseVector{0, 0, 0}, 0.25) == DenseVector{0.25, 0.25, 0.25});
  CHECK(clamp(DenseVector{-3, 4}, 1e-3) == DenseVector{3, 4});
  CHECK_THROWS(clamp(DenseVector{1}, 0.0));
  CHECK_THROWS(clamp(DenseVector{1}, -1.0));

  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const DenseVector d = standard_normal(6, rng);
    const DenseVector c = clamp(d, 0.3);
    for (double v : c) CHECK(v >= 0.3);
    CHECK(clamp(c, 0.3) == c);
  }
}

TEST_CASE("ema with beta2 = 1 and alpha = 1 keeps the identity") {
  DenseVector d(4, 1.0);
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    d = ema_update(d, standard_normal(4, rng), 1.0);
    CHECK(clamp(d, 1.0) == DenseVector(4, 1.0));
  }
}

TEST_CASE("warmstart") {
  const auto diag = matrix_oracle({2, 0, 0, -3}, 2);
  Rng r(1);
  CHECK(warmstart(diag, DenseVector{0, 0}, 1, r) == DenseVector{2, -3});

  Rng mat_rng(55);
  const std::size_t d = 10;
  const DenseVector a = symmetric(d, mat_rng);
  const auto h = matrix_oracle(a, d);
  const DenseVector w(d, 0.0);

  // m = 2 equals the hand average of two samples from the same stream.
  Rng r1(77), r2(77);
  const DenseVector ws = warmstart(h, w, 2, r1);
  const DenseVector z1 = rademacher(d, r2);
  const DenseVector z2 = rademacher(d, r2);
  const DenseVector hand =
      scaled(0.5, add(hutchinson_sample(h, w, z1), hutchinson_sample(h, w, z2)));
  CHECK(max_abs_diff(ws, hand) <= 1e-15);
  Rng r3(77);
  CHECK(warmstart(h, w, 2, r3) == ws);

  Rng r4(99);
  CHECK(rel_err(warmstart(h, w, 5000, r4), diag_of(a, d)) <= 0.1);
  CHECK_THROWS(warmstart(h, w, 0, r4));
}

TEST_CASE("bias correction") {
  const DenseVector v{2.0, -4.0};
  CHECK(max_abs_diff(bias_correct(scaled(0.1, v), 0.9, 0), v) <= 1e-15);

  // Hand-unrolled EMA from zero: D_0 = 0.5, D_1 = 0.75.
  DenseVector d{0.0};
  d = ema_update(d, DenseVector{1.0}, 0.5);
  d = ema_update(d, DenseVector{1.0}, 0.5);
  CHECK(d[0] == 0.75);
  CHECK(bias_correct(d, 0.5, 1)[0] == 1.0);

  CHECK(bias_correct(DenseVector{3.0}, 0.9, 5000)[0] == doctest::Approx(3.0));
  CHECK_THROWS(bias_correct(DenseVector{1.0}, 1.0, 0));
}

TEST_CASE("second-moment preconditioners") {
  SUBCASE("adagrad accumulates") {
    SecondMomentAccumulator acc(MomentKind::adagrad, 2, 0.999);
    acc.update(DenseVector{3, 4});
    CHECK(acc.update(DenseVector{0, 0}) == DenseVector{3, 4});
    CHECK(acc.steps() == 2);
  }
  SUBCASE("rmsprop has no bias correction") {
    SecondMomentAccumulator acc(MomentKind::rmsprop, 1, 0.75);
    CHECK(acc.update(DenseVector{2})[0] == doctest::Approx(1.0));
  }
  SUBCASE("adam first step returns |g|") {
    SecondMomentAccumulator acc(MomentKind::adam, 3, 0.999);
    const DenseVector& d = acc.update(DenseVector{0.5, -2, 7});
    CHECK(max_abs_diff(d, DenseVector{0.5, 2, 7}) <= 1e-12);
  }
  SUBCASE("adahessian tends to |diag| on a fixed diagonal Hessian") {
    SecondMomentAccumulator acc(MomentKind::adahessian, 2, 0.999);
    const auto h = matrix_oracle({2, 0, 0, -3}, 2);
    Rng rng(3);
    DenseVector d;
    for (int k = 0; k < 200; ++k)
      d = acc.update(hutchinson_sample(h, DenseVector{0, 0}, rademacher(2, rng)));
    CHECK(max_abs_diff(d, DenseVector{2, 3}) <= 1e-12);
  }
}

TEST_CASE("oracle linearity") {
  Rng rng(12);
  const std::size_t d = 8;
  const auto h = matrix_oracle(symmetric(d, rng), d);
  const DenseVector w(d, 0.0);
  for (int t = 0; t < 20; ++t) {
    const DenseVector v1 = standard_normal(d, rng), v2 = standard_normal(d, rng);
    const double a = rng.normal(), b = rng.normal();
    DenseVector combo = scaled(a, v1);
    axpy(b, v2, combo);
    DenseVector rhs = scaled(a, h(w, v1, std::nullopt));
    axpy(b, h(w, v2, std::nullopt), rhs);
    CHECK(max_abs_diff(h(w, combo, std::nullopt), rhs) <= 1e-10);
  }
}

TEST_CASE("preconditioner extremes") {
  DiagonalPreconditioner p;
  p.d_hat = {0.5, 3, 1};
  CHECK(p.min_entry() == 0.5);
  CHECK(p.max_entry() == 3);
}
