#include "slowfast/expansion.hpp"

#include <algorithm>
#include <cmath>

#include "path_walker.hpp"
#include "slowfast/error.hpp"

namespace slowfast {

namespace {

constexpr std::uint64_t kGradientTag = 0xD0D0;
constexpr std::uint64_t kFrozenTag = 0xF0F0;

void require_samples(std::size_t n) {
  if (n < 2) throw InvalidInputError("sample count n must be >= 2");
}

void require_direction(ConstVec k, std::size_t n) {
  if (k.size() != n) throw InvalidInputError("direction has wrong dimension");
  if (std::all_of(k.begin(), k.end(), [](double v) { return v == 0.0; })) {
    throw InvalidInputError("direction must be nonzero");
  }
}

double dot(ConstVec a, ConstVec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Left-point integral of a(x, Y_s) - abar(x) along the path (exact in
// expectation on the Euler chain for a linear read; see ergodic.cpp).
class CenteredIntegral {
 public:
  CenteredIntegral(const CoefficientModel& model, ConstVec x, ConstVec abar_x)
      : model_(model), x_(x), abar_(abar_x), sum_(abar_x.size(), 0.0), a0_(abar_x.size()) {}

  void segment(double t0, double t1, ConstVec y0, ConstVec) {
    model_.a(x_, y0, a0_);
    const double w = t1 - t0;
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += w * (a0_[i] - abar_[i]);
  }
  void node(double, ConstVec, std::uint8_t) {}

  const std::vector<double>& sum() const { return sum_; }

 private:
  const CoefficientModel& model_;
  ConstVec x_;
  ConstVec abar_;
  std::vector<double> sum_;
  std::vector<double> a0_;
};

}  // namespace

MCEstimate estimate_Dx_ubar(const DriftField& abar, const CoefficientModel& model,
                            const Observable& obs, double T, ConstVec x, ConstVec direction,
                            std::size_t n, double dt, const RandomPlan& plan,
                            const DerivativeOptions& options) {
  require_samples(n);
  require_direction(direction, model.dims().n);
  const auto stats = parallel_sample_stats(n, 1, [&](std::size_t i, std::span<double> out) {
    const auto r = simulate_first_variation(abar, model, x, direction, T, dt, plan.for_sample(i),
                                            options.variation);
    std::vector<double> grad(r.x_T.size());
    obs.gradient(r.x_T, grad, options.phi_step);
    out[0] = dot(grad, r.eta_T);
  });
  return stats[0].estimate();
}

MCEstimate estimate_Dx_ubar_fd(const DriftField& abar, const CoefficientModel& model,
                               const Observable& obs, double T, ConstVec x, ConstVec direction,
                               std::size_t n, double dt, const RandomPlan& plan, double delta) {
  require_samples(n);
  require_direction(direction, model.dims().n);
  if (!(delta > 0.0)) throw InvalidInputError("finite-difference delta must be > 0");
  std::vector<double> up(x.begin(), x.end()), down(x.begin(), x.end());
  for (std::size_t i = 0; i < up.size(); ++i) {
    up[i] += delta * direction[i];
    down[i] -= delta * direction[i];
  }
  const auto stats = parallel_sample_stats(n, 1, [&](std::size_t i, std::span<double> out) {
    const RandomPlan p = plan.for_sample(i);
    const double hi = obs(simulate_averaged(abar, model, up, T, dt, p).x_T);
    const double lo = obs(simulate_averaged(abar, model, down, T, dt, p).x_T);
    out[0] = (hi - lo) / (2.0 * delta);
  });
  return stats[0].estimate();
}

std::vector<MCEstimate> estimate_grad_ubar(const DriftField& abar,
                                           const CoefficientModel& model,
                                           const Observable& obs, double T, ConstVec x,
                                           std::size_t n, double dt, const RandomPlan& plan,
                                           const DerivativeOptions& options) {
  const std::size_t dim = model.dims().n;
  std::vector<MCEstimate> out;
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<double> e(dim, 0.0);
    e[i] = 1.0;
    out.push_back(estimate_Dx_ubar(abar, model, obs, T, x, e, n, dt, plan.derive(i), options));
  }
  return out;
}

GradientCache::Key GradientCache::make_key(double t, ConstVec x) const {
  Key key;
  key.push_back(static_cast<long long>(std::llround(t / quantum_)));
  for (double v : x) key.push_back(static_cast<long long>(std::llround(v / quantum_)));
  return key;
}

MCEstimate rho_from_gradient(const CoefficientModel& model, const DriftField& abar, ConstVec x,
                             ConstVec y, const std::vector<MCEstimate>& grad) {
  const std::size_t dim = model.dims().n;
  std::vector<double> a(dim), ab(dim);
  model.a(x, y, a);
  abar(x, ab);
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = a[i] - ab[i];
    mean += d * grad[i].mean;
    var += d * d * grad[i].std_error * grad[i].std_error;
    n = std::max(n, grad[i].n);
  }
  return {mean, std::sqrt(var), n};
}

MCEstimate estimate_rho(const CoefficientModel& model, const DriftField& abar,
                        const Observable& obs, double t, ConstVec x, ConstVec y, std::size_t n,
                        double dt, const RandomPlan& plan, const DerivativeOptions& options) {
  if (y.size() != model.dims().m) throw InvalidInputError("fast state has wrong dimension");
  const auto grad = estimate_grad_ubar(abar, model, obs, t, x, n, dt, plan, options);
  return rho_from_gradient(model, abar, x, y, grad);
}

U1Estimate estimate_u1_with_gradient(const CoefficientModel& model, const DriftField& abar,
                                     ConstVec x, ConstVec y,
                                     const std::vector<MCEstimate>& grad,
                                     const U1Settings& settings, const RandomPlan& plan) {
  const Dims& d = model.dims();
  if (x.size() != d.n || y.size() != d.m) throw InvalidInputError("state has wrong dimension");
  if (grad.size() != d.n) throw InvalidInputError("gradient has wrong dimension");
  require_samples(settings.n_paths);
  if (!(settings.dt_frozen > 0.0)) throw InvalidInputError("dt_frozen must be > 0");

  U1Estimate est;
  const AssumptionReport diss = check_dissipativity(model, default_dissipativity_probe(d));
  est.beta_hat = diss.beta_hat.value_or(0.0);
  if (!(est.beta_hat > 0.0)) {
    throw InvalidModelError("u1 needs a dissipative fast equation (beta_hat <= 0)");
  }
  if (settings.S < 10.0 / est.beta_hat * (1.0 - 1e-12)) {
    throw InvalidInputError("truncation horizon S must be >= 10 / beta_hat = " +
                            std::to_string(10.0 / est.beta_hat));
  }

  std::vector<double> abar_x(d.n);
  abar(x, abar_x);
  // Columns: integral per coordinate, then |y - Y_S|^2.
  const auto stats =
      parallel_sample_stats(settings.n_paths, d.n + 1, [&](std::size_t i, std::span<double> out) {
        const RandomPlan p = plan.for_sample(i);
        const JumpSchedule jumps =
            sample_jump_times(model.lambda2(), settings.S, p, NoiseRole::kFastJumps);
        const auto noise =
            detail::make_walk_noise(p, nullptr, &jumps, d.d1, d.d2, settings.dt_frozen, settings.S);
        CenteredIntegral integral(model, x, abar_x);
        detail::FrozenVisitor<CenteredIntegral> visitor(model, x, y, integral);
        detail::walk(noise, 0.0, settings.S, visitor);
        std::copy(integral.sum().begin(), integral.sum().end(), out.begin());
        double sq = 0.0;
        for (std::size_t j = 0; j < d.m; ++j) {
          const double e = y[j] - visitor.state()[j];
          sq += e * e;
        }
        out[d.n] = sq;
      });

  double mean = 0.0, var = 0.0, grad_norm_sq = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    const MCEstimate in = stats[i].estimate();
    est.centered_integral.push_back(in);
    mean += grad[i].mean * in.mean;
    var += grad[i].mean * grad[i].mean * in.std_error * in.std_error +
           in.mean * in.mean * grad[i].std_error * grad[i].std_error;
    grad_norm_sq += grad[i].mean * grad[i].mean;
  }
  est.gradient = grad;
  est.value = {mean, std::sqrt(var), settings.n_paths};

  const double lip = lipschitz_of_a_in_y(model, default_nondegeneracy_probe(d));
  const double spread = std::sqrt(stats[d.n].mean());
  est.tail_bound = std::sqrt(grad_norm_sq) * lip * spread * (2.0 / est.beta_hat) *
                   std::exp(-0.5 * est.beta_hat * settings.S);
  if (est.tail_bound > est.value.std_error) {
    est.warnings.push_back("u1 tail bound " + std::to_string(est.tail_bound) +
                           " exceeds stderr " + std::to_string(est.value.std_error) +
                           "; increase S");
  }
  return est;
}

U1Estimate estimate_u1(const CoefficientModel& model, const DriftField& abar,
                       const Observable& obs, double t, ConstVec x, ConstVec y,
                       const U1Settings& settings, const RandomPlan& plan) {
  const auto grad = estimate_grad_ubar(abar, model, obs, t, x, settings.n_derivative,
                                       settings.dt_averaged, plan.derive(kGradientTag),
                                       settings.derivative);
  return estimate_u1_with_gradient(model, abar, x, y, grad, settings, plan.derive(kFrozenTag));
}

std::vector<ExpansionReport> residual_check(const CoefficientModel& model,
                                            const DriftField& abar, const Observable& obs,
                                            ConstVec x, ConstVec y,
                                            const std::vector<double>& epsilons,
                                            const ResidualSettings& settings,
                                            const RandomPlan& plan) {
  validate_epsilons(epsilons);
  if (epsilons.size() < 2) throw InvalidInputError("residual_check needs at least 2 epsilons");

  const U1Estimate u1 = estimate_u1(model, abar, obs, settings.T, x, y, settings.u1,
                                    plan.derive(0x01A1));
  const double eps_min = *std::min_element(epsilons.begin(), epsilons.end());
  const double eps0 = *std::max_element(epsilons.begin(), epsilons.end());
  const double dt = settings.dt.value_or(0.1 * eps_min);

  std::vector<ExpansionReport> out;
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    ExpansionReport r;
    r.epsilon = epsilons[k];
    r.n = samples_for_epsilon(settings.n0, eps0, r.epsilon);
    r.dt = dt;
    const ScaleParams scale{r.epsilon, settings.T, dt, 0.1};
    const WeakErrorDetail w =
        weak_error_detail(model, abar, scale, x, y, obs, r.n, plan.derive(k), true);
    r.u_eps = w.u_eps;
    r.u_bar = w.u_bar;
    r.difference = w.difference;
    r.u1_hat = u1.value;
    r.r_eps.mean = r.u_eps.mean - r.u_bar.mean - r.epsilon * r.u1_hat.mean;
    r.r_eps.std_error = std::hypot(w.difference.std_error, r.epsilon * u1.value.std_error);
    r.r_eps.n = r.n;
    r.S = settings.u1.S;
    r.tail_bound = u1.tail_bound;
    r.warnings = u1.warnings;
    out.push_back(std::move(r));
  }
  return out;
}

ResidualBoundedness residual_boundedness(const std::vector<ExpansionReport>& reports,
                                         double ratio) {
  ResidualBoundedness b;
  if (reports.empty()) return b;
  b.min_upper = INFINITY;
  for (const auto& r : reports) {
    const double scaled = std::abs(r.r_eps.mean) / r.epsilon;
    const double allowance = (3.0 * r.r_eps.std_error + r.epsilon * r.tail_bound) / r.epsilon;
    b.max_lower = std::max(b.max_lower, std::max(0.0, scaled - allowance));
    b.min_upper = std::min(b.min_upper, scaled + allowance);
  }
  b.bounded = b.max_lower <= ratio * b.min_upper;
  return b;
}

}  // namespace slowfast
