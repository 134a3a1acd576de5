#include "oasis/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace oasis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxBacktracks = 60;

// w <- w - eta * dir / d
void scaled_step(std::span<double> w, double eta, std::span<const double> dir,
                 std::span<const double> d) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * dir[i] / d[i];
}

void ensure_finite(std::span<const double> w, double eta, std::size_t k,
                   const std::string& who) {
  if (!std::isfinite(eta) || !all_finite(w)) {
    std::ostringstream os;
    os << who << ": non-finite iterate at k=" << k << " (eta=" << eta
       << ", ||w||_inf=" << inf_norm(w) << ")";
    throw OptimizerAbort(os.str());
  }
}

}  // namespace

std::optional<double> adaptive_lr(double eta_prev,
                                  std::optional<double> theta_prev,
                                  std::span<const double> dw,
                                  std::span<const double> dg,
                                  std::span<const double> d_hat, double gamma,
                                  bool optimistic) {
  if (!(eta_prev > 0.0))
    throw std::invalid_argument("adaptive_lr: eta_prev must be positive");
  if (!(gamma > 0.0))
    throw std::invalid_argument("adaptive_lr: gamma must be positive");
  const double growth =
      theta_prev ? std::sqrt(1.0 + gamma * *theta_prev) * eta_prev : kInf;
  const double dual = weighted_dual_norm(dg, d_hat);
  const double c = optimistic ? 1.0 : 2.0;
  const double local =
      dual > 0.0 ? weighted_norm(dw, d_hat) / (c * dual) : kInf;
  const double eta = std::min(growth, local);
  if (std::isinf(eta)) return std::nullopt;
  return eta;
}

double armijo_linesearch(const Objective& problem, std::span<const double> w,
                         std::span<const double> p, double eta_init, double c1,
                         double tau, const Batch& batch) {
  const DenseVector g = problem.gradient(w, batch);
  return armijo_linesearch(problem, w, p, eta_init, c1, tau,
                           problem.value(w, batch), g, batch, nullptr);
}

double armijo_linesearch(const Objective& problem, std::span<const double> w,
                         std::span<const double> p, double eta_init, double c1,
                         double tau, double f_w,
                         std::span<const double> grad_w, const Batch& batch,
                         std::size_t* evaluations) {
  if (!(c1 > 0.0 && c1 < 1.0) || !(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("armijo_linesearch: need c1, tau in (0, 1)");
  if (!(eta_init > 0.0))
    throw std::invalid_argument("armijo_linesearch: eta_init must be positive");
  const double slope = dot(grad_w, p);
  if (!(slope < 0.0))
    throw std::invalid_argument(
        "armijo_linesearch: p is not a descent direction");
  DenseVector trial(w.size());
  double eta = eta_init;
  for (std::size_t j = 0; j <= kMaxBacktracks; ++j) {
    for (std::size_t i = 0; i < w.size(); ++i) trial[i] = w[i] + eta * p[i];
    if (evaluations) *evaluations = j + 1;
    if (problem.value(trial, batch) <= f_w + c1 * eta * slope) return eta;
    eta *= tau;
  }
  throw std::runtime_error("armijo_linesearch: no sufficient decrease after " +
                           std::to_string(kMaxBacktracks) + " reductions");
}

// ---------------------------------------------------------------------------

ScheduleSpec::ScheduleSpec(std::vector<std::pair<std::size_t, double>> points)
    : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i].second > 0.0))
      throw std::invalid_argument("ScheduleSpec: multipliers must be positive");
    if (i > 0 && points_[i].first <= points_[i - 1].first)
      throw std::invalid_argument(
          "ScheduleSpec: epochs must be strictly increasing");
  }
}

ScheduleSpec ScheduleSpec::parse(const std::string& text) {
  std::vector<std::pair<std::size_t, double>> pts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(),
                              [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("schedule entry '" + item +
                                  "' is not epoch:multiplier");
    std::size_t used = 0;
    const std::string ep = item.substr(0, colon);
    const std::string mul = item.substr(colon + 1);
    const unsigned long long e = std::stoull(ep, &used);
    if (used != ep.size())
      throw std::invalid_argument("bad schedule epoch '" + ep + "'");
    const double r = std::stod(mul, &used);
    if (used != mul.size())
      throw std::invalid_argument("bad schedule multiplier '" + mul + "'");
    pts.emplace_back(static_cast<std::size_t>(e), r);
  }
  return ScheduleSpec(std::move(pts));
}

double ScheduleSpec::multiplier_at(std::size_t epoch) const {
  double m = 1.0;
  for (const auto& [e, r] : points_)
    if (e == epoch) m *= r;
  return m;
}

std::string ScheduleSpec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (i) os << ',';
    os << points_[i].first << ':' << points_[i].second;
  }
  return os.str();
}

double apply_schedule(double eta, const ScheduleSpec& schedule,
                      std::size_t epoch) {
  return eta * schedule.multiplier_at(epoch);
}

// ---------------------------------------------------------------------------

Batch Optimizer::next_batch(const Objective& problem, double* fraction) {
  const std::size_t n = problem.n_samples();
  if (batch_size_ == 0 || batch_size_ >= n) {
    *fraction = 1.0;
    return std::nullopt;
  }
  batch_storage_ = sample_batch(n, batch_size_, rng_);
  *fraction = static_cast<double>(batch_size_) / static_cast<double>(n);
  return std::span<const std::size_t>(batch_storage_);
}

// ---------------------------------------------------------------------------

void OasisConfig::validate(std::size_t dim) const {
  if (!(eta > 0.0)) throw std::invalid_argument("oasis: eta must be > 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("oasis: alpha must be > 0");
  if (!(beta2 >= 0.0 && beta2 <= 1.0))
    throw std::invalid_argument("oasis: beta2 must lie in [0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0))
    throw std::invalid_argument("oasis: beta1 must lie in [0, 1)");
  if (!(gamma > 0.0)) throw std::invalid_argument("oasis: gamma must be > 0");
  if (init == DiagInit::warmstart && warmstart_samples == 0)
    throw std::invalid_argument("oasis: warmstart needs at least one sample");
  if (init == DiagInit::bias_corrected && beta2 >= 1.0)
    throw std::invalid_argument("oasis: bias correction needs beta2 < 1");
  if (init == DiagInit::explicit_diag && initial_diag.size() != dim)
    throw DimensionError("oasis: initial diagonal has the wrong dimension");
  if (rule == StepRule::linesearch &&
      (!(c1 > 0.0 && c1 < 1.0) || !(tau > 0.0 && tau < 1.0)))
    throw std::invalid_argument("oasis: line search needs c1, tau in (0, 1)");
}

Oasis::Oasis(const OasisConfig& config, DenseVector w0, Rng rng)
    : Optimizer(std::move(w0), config.batch_size, rng), cfg_(config) {
  cfg_.validate(w_.size());
  precond_.alpha = cfg_.alpha;
  precond_.beta2 = cfg_.beta2;
  eta_prev_ = cfg_.eta;
}

std::string Oasis::name() const { return "oasis-" + to_string(cfg_.rule); }

OasisState Oasis::state() const {
  OasisState s;
  s.w = w_;
  s.w_prev = w_prev_;
  s.g_prev = g_prev_;
  s.eta = eta_prev_;
  s.theta = theta_prev_;
  s.precond = precond_;
  s.m = m_;
  s.k = k_;
  s.pass_count = passes_;
  return s;
}

void Oasis::scale_step_size(double rho) {
  if (!(rho > 0.0))
    throw std::invalid_argument("scale_step_size: rho must be positive");
  if (cfg_.rule == StepRule::adaptive)
    eta_prev_ *= rho;
  else
    cfg_.eta *= rho;
}

void Oasis::refresh_preconditioner(const Objective& problem, const Batch& batch,
                                   double fraction, StepReport& rep) {
  const DenseVector z = rademacher(w_.size(), rng_);
  const DenseVector v = hutchinson_sample(problem.hvp_oracle(), w_, z, batch);
  passes_ += fraction;
  rep.sample_inf = inf_norm(v);
  DenseVector next = ema_update(precond_.d_raw, v, cfg_.beta2);
  rep.drift_inf = max_abs_diff(next, precond_.d_raw);
  precond_.d_raw = std::move(next);
  ++ema_updates_;
  if (cfg_.init == DiagInit::bias_corrected)
    precond_.d_hat = clamp(
        bias_correct(precond_.d_raw, cfg_.beta2, ema_updates_ - 1), cfg_.alpha);
  else
    precond_.d_hat = clamp(precond_.d_raw, cfg_.alpha);
}

StepReport Oasis::first_step(const Objective& problem) {
  StepReport rep;
  rep.k = 0;
  double fraction = 1.0;
  const Batch batch = next_batch(problem, &fraction);
  const std::size_t d = w_.size();

  switch (cfg_.init) {
    case DiagInit::warmstart:
      precond_.d_raw = warmstart(problem.hvp_oracle(), w_,
                                 cfg_.warmstart_samples, rng_, batch);
      passes_ += fraction * static_cast<double>(cfg_.warmstart_samples);
      precond_.d_hat = clamp(precond_.d_raw, cfg_.alpha);
      break;
    case DiagInit::explicit_diag:
      precond_.d_raw = cfg_.initial_diag;
      precond_.d_hat = clamp(precond_.d_raw, cfg_.alpha);
      break;
    case DiagInit::bias_corrected:
      precond_.d_raw.assign(d, 0.0);
      refresh_preconditioner(problem, batch, fraction, rep);
      break;
  }
  rep.sample_inf = std::max(rep.sample_inf, inf_norm(precond_.d_raw));

  const DenseVector g = problem.gradient(w_, batch);
  passes_ += fraction;
  m_ = g;

  double eta = cfg_.eta;
  if (cfg_.rule == StepRule::linesearch) {
    DenseVector p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = -g[i] / precond_.d_hat[i];
    std::size_t evals = 0;
    const double f = problem.value(w_, batch);
    eta = armijo_linesearch(problem, w_, p, cfg_.eta, cfg_.c1, cfg_.tau, f, g,
                            batch, &evals);
    passes_ += fraction * static_cast<double>(evals + 1);
  }

  w_prev_ = w_;
  g_prev_ = g;
  scaled_step(w_, eta, g, precond_.d_hat);
  ensure_finite(w_, eta, k_, name());

  eta_prev_ = eta;
  theta_prev_.reset();
  rep.eta = eta;
  rep.growth_cap = kInf;
  rep.dhat_min = precond_.min_entry();
  rep.dhat_max = precond_.max_entry();
  ++k_;
  rep.passes = passes_;
  return rep;
}

StepReport Oasis::step(const Objective& problem) {
  if (k_ == 0) return first_step(problem);

  StepReport rep;
  rep.k = k_;
  double fraction = 1.0;
  const Batch batch = next_batch(problem, &fraction);

  // D_k from a fresh probe at w_k (J_k = I_k), then the clamped D-hat_k.
  refresh_preconditioner(problem, batch, fraction, rep);

  const DenseVector g = problem.gradient(w_, batch);
  passes_ += fraction;

  double eta = cfg_.eta;
  std::span<const double> direction = g;
  switch (cfg_.rule) {
    case StepRule::adaptive: {
      DenseVector g_old;
      if (batch) {
        // Both gradients of the difference are taken on the same batch I_k.
        g_old = problem.gradient(w_prev_, batch);
        passes_ += fraction;
      } else {
        g_old = g_prev_;
      }
      const DenseVector dw = subtract(w_, w_prev_);
      const DenseVector dg = subtract(g, g_old);
      rep.growth_cap =
          theta_prev_ ? std::sqrt(1.0 + cfg_.gamma * *theta_prev_) * eta_prev_
                      : kInf;
      eta = adaptive_lr(eta_prev_, theta_prev_, dw, dg, precond_.d_hat,
                        cfg_.gamma, cfg_.optimistic)
                .value_or(eta_prev_);
      rep.theta = eta / eta_prev_;
      break;
    }
    case StepRule::fixed:
      break;
    case StepRule::momentum:
      for (std::size_t i = 0; i < m_.size(); ++i)
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
      direction = m_;
      break;
    case StepRule::linesearch: {
      DenseVector p(g.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        p[i] = -g[i] / precond_.d_hat[i];
      std::size_t evals = 0;
      const double f = problem.value(w_, batch);
      eta = armijo_linesearch(problem, w_, p, cfg_.eta, cfg_.c1, cfg_.tau, f,
                              g, batch, &evals);
      passes_ += fraction * static_cast<double>(evals + 1);
      break;
    }
  }

  w_prev_ = w_;
  scaled_step(w_, eta, direction, precond_.d_hat);
  ensure_finite(w_, eta, k_, name());
  g_prev_ = g;

  if (cfg_.rule == StepRule::adaptive) theta_prev_ = rep.theta;
  eta_prev_ = eta;
  rep.eta = eta;
  rep.dhat_min = precond_.min_entry();
  rep.dhat_max = precond_.max_entry();
  ++k_;
  rep.passes = passes_;
  return rep;
}

// ---------------------------------------------------------------------------

void BaselineConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("baseline: eta must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0))
    throw std::invalid_argument("baseline: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("baseline: beta2 must lie in [0, 1)");
  if (!(eps >= 0.0)) throw std::invalid_argument("baseline: eps must be >= 0");
  if (!(weight_decay >= 0.0))
    throw std::invalid_argument("baseline: weight decay must be >= 0");
}

BaselineOptimizer::BaselineOptimizer(const BaselineConfig& config,
                                     DenseVector w0, Rng rng)
    : Optimizer(std::move(w0), config.batch_size, rng), cfg_(config) {
  cfg_.validate();
  const std::size_t d = w_.size();
  m_.assign(d, 0.0);
  d_.assign(d, 1.0);
  switch (cfg_.kind) {
    case BaselineKind::adagrad:
      moments_.emplace(MomentKind::adagrad, d, cfg_.beta2);
      break;
    case BaselineKind::rmsprop:
      moments_.emplace(MomentKind::rmsprop, d, cfg_.beta2);
      break;
    case BaselineKind::adam:
    case BaselineKind::adamw:
      moments_.emplace(MomentKind::adam, d, cfg_.beta2);
      break;
    case BaselineKind::adahessian:
      moments_.emplace(MomentKind::adahessian, d, cfg_.beta2);
      break;
    case BaselineKind::sgd:
    case BaselineKind::adgd:
      break;
  }
  eta_prev_ = cfg_.eta;
}

std::string BaselineOptimizer::name() const { return to_string(cfg_.kind); }

void BaselineOptimizer::scale_step_size(double rho) {
  if (!(rho > 0.0))
    throw std::invalid_argument("scale_step_size: rho must be positive");
  if (cfg_.kind == BaselineKind::adgd)
    eta_prev_ *= rho;
  else
    cfg_.eta *= rho;
}

StepReport BaselineOptimizer::step(const Objective& problem) {
  StepReport rep;
  rep.k = k_;
  rep.growth_cap = kInf;
  double fraction = 1.0;
  const Batch batch = next_batch(problem, &fraction);

  const DenseVector g = problem.gradient(w_, batch);
  passes_ += fraction;
  const double t = static_cast<double>(k_ + 1);

  double eta = cfg_.eta;
  std::span<const double> direction = g;
  auto bias_corrected_momentum = [&] {
    for (std::size_t i = 0; i < m_.size(); ++i)
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
    DenseVector mhat = m_;
    const double corr = 1.0 - std::pow(cfg_.beta1, t);
    for (double& x : mhat) x /= corr;
    return mhat;
  };
  auto set_scaling = [&](const DenseVector& root) {
    for (std::size_t i = 0; i < d_.size(); ++i) d_[i] = root[i] + cfg_.eps;
  };

  DenseVector mhat;
  switch (cfg_.kind) {
    case BaselineKind::sgd:
      for (std::size_t i = 0; i < m_.size(); ++i)
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
      direction = m_;
      break;
    case BaselineKind::adagrad:
    case BaselineKind::rmsprop:
      set_scaling(moments_->update(g));
      break;
    case BaselineKind::adam:
    case BaselineKind::adamw:
      mhat = bias_corrected_momentum();
      direction = mhat;
      set_scaling(moments_->update(g));
      break;
    case BaselineKind::adahessian: {
      mhat = bias_corrected_momentum();
      direction = mhat;
      const DenseVector z = rademacher(w_.size(), rng_);
      const DenseVector v =
          hutchinson_sample(problem.hvp_oracle(), w_, z, batch);
      passes_ += fraction;
      rep.sample_inf = inf_norm(v);
      set_scaling(moments_->update(v));
      break;
    }
    case BaselineKind::adgd: {
      if (k_ == 0) {
        eta = eta_prev_;
      } else {
        DenseVector g_old;
        if (batch) {
          g_old = problem.gradient(w_prev_, batch);
          passes_ += fraction;
        } else {
          g_old = g_prev_;
        }
        const DenseVector dw = subtract(w_, w_prev_);
        const DenseVector dg = subtract(g, g_old);
        rep.growth_cap =
            theta_prev_ ? std::sqrt(1.0 + *theta_prev_) * eta_prev_ : kInf;
        eta = adaptive_lr(eta_prev_, theta_prev_, dw, dg, d_, 1.0, false)
                  .value_or(eta_prev_);
        rep.theta = eta / eta_prev_;
        theta_prev_ = rep.theta;
      }
      eta_prev_ = eta;
      break;
    }
  }

  w_prev_ = w_;
  g_prev_ = g;
  if (cfg_.kind == BaselineKind::adamw)
    for (double& wi : w_) wi -= eta * cfg_.weight_decay * wi;
  scaled_step(w_, eta, direction, d_);
  ensure_finite(w_, eta, k_, name());

  rep.eta = eta;
  auto [mn, mx] = std::minmax_element(d_.begin(), d_.end());
  rep.dhat_min = d_.empty() ? 1.0 : *mn;
  rep.dhat_max = d_.empty() ? 1.0 : *mx;
  ++k_;
  rep.passes = passes_;
  return rep;
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::sgd: return "sgd";
    case BaselineKind::adagrad: return "adagrad";
    case BaselineKind::rmsprop: return "rmsprop";
    case BaselineKind::adam: return "adam";
    case BaselineKind::adamw: return "adamw";
    case BaselineKind::adahessian: return "adahessian";
    case BaselineKind::adgd: return "adgd";
  }
  return "unknown";
}

std::string to_string(StepRule rule) {
  switch (rule) {
    case StepRule::adaptive: return "adaptive";
    case StepRule::fixed: return "fixed";
    case StepRule::momentum: return "momentum";
    case StepRule::linesearch: return "linesearch";
  }
  return "unknown";
}

}  // namespace oasis
