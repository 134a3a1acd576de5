#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "oasis/dataio.hpp"
#include "oasis/optimizers.hpp"

using namespace oasis;

namespace {

LogisticRegression synthetic_logistic(std::size_t n, std::size_t d, double lambda,
                                      std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds = synth_classification(n, d, 1.0, 1.0, rng);
  return LogisticRegression(ds.x, ds.y, lambda);
}

OasisConfig oasis_cfg(StepRule rule, double eta) {
  OasisConfig c;
  c.rule = rule;
  c.eta = eta;
  return c;
}

}  // namespace

TEST_CASE("adaptive_lr examples") {
  const DenseVector id{1, 1}, dw{1, 0}, dg{0.5, 0};
  CHECK(*adaptive_lr(0.1, 1.0, dw, dg, id) ==
        doctest::Approx(0.1 * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(*adaptive_lr(0.1, std::nullopt, dw, dg, id) == doctest::Approx(1.0));
  CHECK(*adaptive_lr(0.1, 1.0, dw, DenseVector{0, 0}, id) ==
        doctest::Approx(0.1 * std::sqrt(2.0)));
  CHECK_FALSE(adaptive_lr(0.1, std::nullopt, dw, DenseVector{0, 0}, id));
  // optimistic halves the denominator; gamma scales theta
  CHECK(*adaptive_lr(10.0, std::nullopt, dw, dg, id, 1.0, true) ==
        doctest::Approx(2.0));
  CHECK(*adaptive_lr(0.1, 1.0, dw, dg, id, 3.0) == doctest::Approx(0.2));
  // weighted geometry: ||dw||_D / (2 ||dg||*_D) = 2 / (2 * 0.25)
  CHECK(*adaptive_lr(100.0, std::nullopt, dw, dg, DenseVector{4, 1}) ==
        doctest::Approx(4.0));
}

TEST_CASE("armijo examples") {
  const Quadratic f = Quadratic::diagonal({1.0}, {0.0});
  const DenseVector w{1.0}, p{-1.0};
  CHECK(armijo_linesearch(f, w, p, 1.0, 0.5, 0.5) == 1.0);
  CHECK(armijo_linesearch(f, w, p, 1.0, 0.9, 0.5) == 0.125);
  CHECK_THROWS_AS(armijo_linesearch(f, w, DenseVector{1.0}, 1.0, 0.5, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(armijo_linesearch(f, w, p, 1.0, 1.5, 0.5), std::invalid_argument);
}

TEST_CASE("armijo accepts only sufficient decrease") {
  Rng rng(21);
  const LogisticRegression f = synthetic_logistic(60, 6, 0.01, 3);
  for (int t = 0; t < 100; ++t) {
    const DenseVector w = scaled(3.0, standard_normal(6, rng));
    const DenseVector g = f.gradient(w);
    DenseVector p(6);
    for (std::size_t i = 0; i < 6; ++i) p[i] = -g[i] / (0.1 + rng.uniform());
    const double c1 = 0.01 + 0.9 * rng.uniform();
    const double eta = armijo_linesearch(f, w, p, 10.0, c1, 0.5);
    DenseVector trial = w;
    axpy(eta, p, trial);
    CHECK(f.value(trial) <= f.value(w) + c1 * eta * dot(g, p));
    // the previous candidate was rejected
    if (eta < 10.0) {
      DenseVector prev = w;
      axpy(2 * eta, p, prev);
      CHECK(f.value(prev) > f.value(w) + c1 * 2 * eta * dot(g, p));
    }
  }
}

TEST_CASE("schedules") {
  CHECK(apply_schedule(1.0, ScheduleSpec::parse("2:0.1"), 2) == doctest::Approx(0.1));
  CHECK(apply_schedule(1.0, ScheduleSpec::parse("2:0.1"), 3) == 1.0);
  CHECK(apply_schedule(0.7, ScheduleSpec{}, 5) == 0.7);

  const ScheduleSpec two = ScheduleSpec::parse("2:0.5, 4:0.5");
  double eta = 1.0;
  for (std::size_t epoch = 1; epoch <= 6; ++epoch) eta = apply_schedule(eta, two, epoch);
  CHECK(eta == 0.25);
  CHECK(ScheduleSpec::parse(two.to_string()).points() == two.points());
  CHECK(ScheduleSpec::parse("").empty());

  CHECK_THROWS(ScheduleSpec::parse("4:0.5,2:0.5"));
  CHECK_THROWS(ScheduleSpec::parse("2:0"));
  CHECK_THROWS(ScheduleSpec::parse("2-0.5"));
}

TEST_CASE("oasis takes a Newton step on a diagonal quadratic") {
  const Quadratic q = Quadratic::diagonal({2, 8}, {0, 0});
  OasisConfig c = oasis_cfg(StepRule::fixed, 1.0);
  c.beta2 = 0.0;
  c.warmstart_samples = 1;
  Oasis opt(c, {1, 1}, Rng(0));
  opt.step(q);
  CHECK(opt.weights() == DenseVector{0, 0});
  CHECK(opt.preconditioner().d_hat == DenseVector{2, 8});
}

TEST_CASE("fixed step from an identity diagonal") {
  // H = I makes D-hat = I whatever the probe.
  const Quadratic q = Quadratic::diagonal({1, 1}, {-1, 2});
  OasisConfig c = oasis_cfg(StepRule::fixed, 0.1);
  Oasis opt(c, {0, 0}, Rng(0));
  opt.step(q);
  CHECK(max_abs_diff(opt.weights(), DenseVector{-0.1, 0.2}) <= 1e-16);
}

TEST_CASE("step identity and spectrum bound hold for every OASIS variant") {
  const LogisticRegression f = synthetic_logistic(100, 8, 0.01, 5);
  for (StepRule rule : {StepRule::adaptive, StepRule::fixed, StepRule::momentum,
                        StepRule::linesearch}) {
    CAPTURE(to_string(rule));
    OasisConfig c = oasis_cfg(rule, rule == StepRule::adaptive ? 1e-4 : 0.05);
    c.beta1 = 0.5;
    Oasis opt(c, DenseVector(8, 0.01), Rng(3));
    double gamma_emp = 0.0;
    DenseVector m(8, 0.0);
    for (int k = 0; k < 40; ++k) {
      const DenseVector w = opt.weights();
      const DenseVector g = f.gradient(w);
      const StepReport rep = opt.step(f);
      const auto d = opt.scaling();
      gamma_emp = std::max(gamma_emp, rep.dhat_max);
      if (rule == StepRule::momentum)
        for (std::size_t i = 0; i < 8; ++i)
          m[i] = k == 0 ? g[i] : c.beta1 * m[i] + (1 - c.beta1) * g[i];
      const DenseVector& dir = rule == StepRule::momentum ? m : g;
      for (std::size_t i = 0; i < 8; ++i) {
        CHECK(d[i] >= c.alpha);
        CHECK(d[i] <= gamma_emp);
        const double expected = -rep.eta * dir[i] / d[i];
        CHECK(std::abs(opt.weights()[i] - w[i] - expected) <=
              1e-15 * (std::abs(w[i]) + std::abs(expected)));
      }
      CHECK(rep.eta > 0.0);
    }
  }
}

TEST_CASE("adaptive step respects the growth cap and the lower eta bound") {
  const LogisticRegression f = synthetic_logistic(200, 10, 1.0 / 200, 1);
  const auto cb = estimate_L_mu(f);
  OasisConfig c = oasis_cfg(StepRule::adaptive, 1e-4);
  Oasis opt(c, DenseVector(10, 0.01), Rng(2));
  double eta_prev = 0.0;
  for (int k = 0; k < 100; ++k) {
    const StepReport rep = opt.step(f);
    if (k == 0) {
      CHECK_FALSE(rep.theta);
      eta_prev = rep.eta;
      continue;
    }
    CHECK(rep.eta <= rep.growth_cap * (1 + 1e-15));
    CHECK(rep.eta >= c.alpha / (2 * cb.L) - 1e-12);
    CHECK(*rep.theta == rep.eta / eta_prev);
    eta_prev = rep.eta;
  }
}

TEST_CASE("momentum variant") {
  SUBCASE("beta1 = 0 is the fixed rule") {
    const LogisticRegression f = synthetic_logistic(80, 5, 0.01, 7);
    OasisConfig a = oasis_cfg(StepRule::fixed, 0.2);
    OasisConfig b = oasis_cfg(StepRule::momentum, 0.2);
    b.beta1 = 0.0;
    Oasis fa(a, DenseVector(5, 0.0), Rng(4)), fb(b, DenseVector(5, 0.0), Rng(4));
    for (int k = 0; k < 30; ++k) {
      fa.step(f);
      fb.step(f);
    }
    CHECK(fa.weights() == fb.weights());
  }
  SUBCASE("m tracks a constant gradient geometrically") {
    // F = -b^T w: gradient -b, zero Hessian so D-hat = alpha.
    const Quadratic lin = Quadratic::diagonal({0, 0}, {1, -2});
    OasisConfig c = oasis_cfg(StepRule::momentum, 0.1);
    c.beta1 = 0.9;
    c.alpha = 0.5;
    Oasis opt(c, {0, 0}, Rng(1));
    for (int k = 0; k < 10; ++k) {
      const DenseVector before = opt.weights();
      opt.step(lin);
      const DenseVector dw = subtract(opt.weights(), before);
      CHECK(max_abs_diff(dw, DenseVector{0.2, -0.4}) <= 1e-15);
    }
  }
  SUBCASE("beta1 = 0.9 lands near the fixed rule after 50 steps") {
    const LogisticRegression f = synthetic_logistic(200, 10, 0.005, 9);
    OasisConfig a = oasis_cfg(StepRule::fixed, 0.1);
    OasisConfig b = oasis_cfg(StepRule::momentum, 0.1);
    b.beta1 = 0.9;
    Oasis fa(a, DenseVector(10, 0.01), Rng(4)), fb(b, DenseVector(10, 0.01), Rng(4));
    for (int k = 0; k < 50; ++k) {
      fa.step(f);
      fb.step(f);
    }
    const double la = f.value(fa.weights()), lb = f.value(fb.weights());
    CHECK(std::abs(lb - la) <= 0.1 * la);
  }
}

TEST_CASE("fixed rule with the theory step size descends monotonically") {
  const Quadratic q = Quadratic::diagonal({2, 8}, {0, 0});
  const double alpha = 1e-5, L = 8.0, gamma = 8.0;
  OasisConfig c = oasis_cfg(StepRule::fixed, alpha * alpha / (L * gamma));
  c.alpha = alpha;
  Oasis opt(c, {1, 1}, Rng(0));
  double prev = q.value(opt.weights());
  for (int k = 0; k < 100; ++k) {
    const StepReport rep = opt.step(q);
    CHECK(rep.dhat_max <= gamma);
    const double now = q.value(opt.weights());
    CHECK(now <= prev);
    prev = now;
  }
}

TEST_CASE("effective pass accounting") {
  const LogisticRegression f = synthetic_logistic(50, 4, 0.01, 11);
  auto per_step = [&](Optimizer& opt) {
    opt.step(f);
    const double before = opt.passes();
    for (int k = 0; k < 10; ++k) opt.step(f);
    return (opt.passes() - before) / 10.0;
  };
  for (StepRule rule : {StepRule::adaptive, StepRule::fixed, StepRule::momentum}) {
    Oasis opt(oasis_cfg(rule, 1e-3), DenseVector(4, 0.0), Rng(0));
    CHECK(per_step(opt) == doctest::Approx(2.0).epsilon(1e-14));
  }
  {
    OasisConfig c = oasis_cfg(StepRule::fixed, 1e-3);
    c.warmstart_samples = 7;
    Oasis opt(c, DenseVector(4, 0.0), Rng(0));
    opt.step(f);
    CHECK(opt.passes() == doctest::Approx(8.0));
  }
  {
    OasisConfig c = oasis_cfg(StepRule::adaptive, 1e-3);
    c.batch_size = 10;
    c.init = DiagInit::bias_corrected;
    Oasis opt(c, DenseVector(4, 0.0), Rng(0));
    CHECK(per_step(opt) == doctest::Approx(3 * 10.0 / 50).epsilon(1e-14));
  }
  for (BaselineKind kind : {BaselineKind::sgd, BaselineKind::adagrad,
                            BaselineKind::rmsprop, BaselineKind::adam,
                            BaselineKind::adamw, BaselineKind::adgd}) {
    CAPTURE(to_string(kind));
    BaselineConfig c;
    c.kind = kind;
    BaselineOptimizer opt(c, DenseVector(4, 0.0), Rng(0));
    CHECK(per_step(opt) == doctest::Approx(1.0).epsilon(1e-14));
  }
  BaselineConfig ah;
  ah.kind = BaselineKind::adahessian;
  BaselineOptimizer opt(ah, DenseVector(4, 0.0), Rng(0));
  CHECK(per_step(opt) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("baseline steps") {
  const Quadratic q = Quadratic::diagonal({1, 1}, {-1, 2});  // g(0) = (1, -2)
  SUBCASE("sgd") {
    BaselineConfig c;
    c.eta = 0.1;
    BaselineOptimizer opt(c, {0, 0}, Rng(0));
    opt.step(q);
    CHECK(max_abs_diff(opt.weights(), DenseVector{-0.1, 0.2}) <= 1e-16);
  }
  SUBCASE("adam first step is bounded by eta per coordinate") {
    BaselineConfig c;
    c.kind = BaselineKind::adam;
    c.eta = 0.01;
    c.beta1 = 0.9;
    BaselineOptimizer opt(c, {0, 0}, Rng(0));
    opt.step(q);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(opt.weights()[i]) <= 0.01);
    CHECK(opt.weights()[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(opt.weights()[1] == doctest::Approx(0.01).epsilon(1e-6));
  }
  SUBCASE("adamw decays the weights before the adam update") {
    BaselineConfig a, w;
    a.kind = BaselineKind::adam;
    w.kind = BaselineKind::adamw;
    a.eta = w.eta = 0.01;
    w.weight_decay = 0.5;
    BaselineOptimizer oa(a, {1, 1}, Rng(0)), ow(w, {1, 1}, Rng(0));
    oa.step(q);
    ow.step(q);
    const DenseVector diff = subtract(oa.weights(), ow.weights());
    CHECK(diff[0] == doctest::Approx(0.005));
    CHECK(diff[1] == doctest::Approx(0.005));
  }
  SUBCASE("adgd converges on a diagonal quadratic") {
    const Quadratic qq = Quadratic::diagonal({2, 8}, {0, 0});
    BaselineConfig c;
    c.kind = BaselineKind::adgd;
    c.eta = 1e-4;
    BaselineOptimizer opt(c, {1, 1}, Rng(0));
    for (int k = 0; k < 200; ++k) opt.step(qq);
    CHECK(qq.value(opt.weights()) < 1e-10);
  }
}

TEST_CASE("runs are bitwise reproducible") {
  const LogisticRegression f = synthetic_logistic(100, 6, 0.01, 13);
  for (std::size_t batch : {std::size_t{0}, std::size_t{16}}) {
    OasisConfig c = oasis_cfg(StepRule::adaptive, 1e-3);
    c.batch_size = batch;
    Oasis a(c, DenseVector(6, 0.0), Rng(5)), b(c, DenseVector(6, 0.0), Rng(5));
    for (int k = 0; k < 30; ++k) {
      const StepReport ra = a.step(f), rb = b.step(f);
      CHECK(ra.eta == rb.eta);
    }
    CHECK(a.weights() == b.weights());
  }
}

TEST_CASE("scale_step_size multiplies the step in force") {
  const Quadratic q = Quadratic::diagonal({1, 1}, {-1, 2});
  OasisConfig c = oasis_cfg(StepRule::fixed, 0.4);
  Oasis opt(c, {0, 0}, Rng(0));
  opt.scale_step_size(0.25);
  CHECK(opt.step(q).eta == 0.1);
  CHECK_THROWS(opt.scale_step_size(0.0));
}

TEST_CASE("non-finite iterates abort") {
  const Quadratic q = Quadratic::diagonal({1, 1}, {-1, 2});
  OasisConfig c = oasis_cfg(StepRule::fixed, std::numeric_limits<double>::max());
  c.alpha = 1e-300;
  c.init = DiagInit::explicit_diag;
  c.initial_diag = {0, 0};
  Oasis opt(c, {0, 0}, Rng(0));
  CHECK_THROWS_AS(opt.step(q), OptimizerAbort);
}

TEST_CASE("config validation") {
  OasisConfig c;
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(3), std::invalid_argument);
  OasisConfig e;
  e.init = DiagInit::explicit_diag;
  e.initial_diag = {1, 1};
  CHECK_THROWS_AS(e.validate(3), std::invalid_argument);
  BaselineConfig b;
  b.beta1 = 1.0;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}
