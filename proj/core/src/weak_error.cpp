#include "slowfast/weak_error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace slowfast {

namespace {

constexpr std::uint64_t kUncoupledEpsTag = 0x5eed0001;
constexpr std::uint64_t kUncoupledBarTag = 0x5eed0002;

void require_samples(std::size_t n) {
  if (n < 2) throw InvalidInputError("sample count n must be >= 2");
}

}  // namespace

void Observable::gradient(ConstVec x, MutVec out, double h) const {
  if (grad) {
    grad(x, out);
    return;
  }
  std::vector<double> p(x.begin(), x.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    p[i] = x[i] + step;
    const double up = phi(p);
    p[i] = x[i] - step;
    const double down = phi(p);
    p[i] = x[i];
    out[i] = (up - down) / (2.0 * step);
  }
}

Observable Observable::tanh_sum() {
  Observable o;
  o.name = "tanh";
  o.phi = [](ConstVec x) {
    double s = 0.0;
    for (double e : x) s += std::tanh(e);
    return s;
  };
  o.grad = [](ConstVec x, MutVec out) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double c = std::cosh(x[i]);
      out[i] = 1.0 / (c * c);
    }
  };
  return o;
}

Observable Observable::coordinate(std::size_t i) {
  Observable o;
  o.name = i == 0 ? "identity" : "x" + std::to_string(i);
  o.smoothness = "C-infinity, unbounded";
  o.phi = [i](ConstVec x) { return x[i]; };
  o.grad = [i](ConstVec x, MutVec out) {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = j == i ? 1.0 : 0.0;
  };
  return o;
}

Observable Observable::constant(double value) {
  Observable o;
  o.name = "constant";
  o.phi = [value](ConstVec) { return value; };
  o.grad = [](ConstVec, MutVec out) { std::fill(out.begin(), out.end(), 0.0); };
  return o;
}

Observable Observable::norm() {
  Observable o;
  o.name = "norm";
  o.smoothness = "Lipschitz";
  o.phi = [](ConstVec x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    return std::sqrt(s);
  };
  return o;
}

Observable observable_by_name(const std::string& name) {
  if (name == "tanh" || name == "tanh_sum") return Observable::tanh_sum();
  if (name == "identity" || name == "x") return Observable::coordinate(0);
  if (name == "constant" || name == "one") return Observable::constant(1.0);
  if (name == "norm") return Observable::norm();
  throw InvalidInputError("unknown observable '" + name + "'");
}

MCEstimate estimate_u_eps(const CoefficientModel& model, const ScaleParams& scale, ConstVec x,
                          ConstVec y, const Observable& obs, std::size_t n,
                          const RandomPlan& plan) {
  require_samples(n);
  scale.validate();
  const auto stats = parallel_sample_stats(n, 1, [&](std::size_t i, std::span<double> out) {
    out[0] = obs(simulate_coupled(model, scale, x, y, plan.for_sample(i)).x_T);
  });
  return stats[0].estimate();
}

MCEstimate estimate_u_bar(const DriftField& abar, const CoefficientModel& model, ConstVec x,
                          const Observable& obs, double T, double dt, std::size_t n,
                          const RandomPlan& plan) {
  require_samples(n);
  const auto stats = parallel_sample_stats(n, 1, [&](std::size_t i, std::span<double> out) {
    out[0] = obs(simulate_averaged(abar, model, x, T, dt, plan.for_sample(i)).x_T);
  });
  return stats[0].estimate();
}

WeakErrorDetail weak_error_detail(const CoefficientModel& model, const DriftField& abar,
                                  const ScaleParams& scale, ConstVec x, ConstVec y,
                                  const Observable& obs, std::size_t n, const RandomPlan& plan,
                                  bool coupled) {
  require_samples(n);
  scale.validate();
  WeakErrorDetail out;
  if (coupled) {
    const auto stats = parallel_sample_stats(n, 3, [&](std::size_t i, std::span<double> v) {
      const auto r = simulate_coupled_pair(model, abar, scale, x, y, plan.for_sample(i));
      v[0] = obs(r.x_eps);
      v[1] = obs(r.x_bar);
      v[2] = v[0] - v[1];
    });
    out.u_eps = stats[0].estimate();
    out.u_bar = stats[1].estimate();
    out.difference = stats[2].estimate();
  } else {
    out.u_eps = estimate_u_eps(model, scale, x, y, obs, n, plan.derive(kUncoupledEpsTag));
    out.u_bar = estimate_u_bar(abar, model, x, obs, scale.T, scale.dt, n,
                               plan.derive(kUncoupledBarTag));
    out.difference = {out.u_eps.mean - out.u_bar.mean, combined_std_error(out.u_eps, out.u_bar),
                      n};
  }
  return out;
}

MCEstimate weak_error(const CoefficientModel& model, const DriftField& abar,
                      const ScaleParams& scale, ConstVec x, ConstVec y, const Observable& obs,
                      std::size_t n, const RandomPlan& plan, bool coupled) {
  return weak_error_detail(model, abar, scale, x, y, obs, n, plan, coupled).difference;
}

MCEstimate strong_error(const CoefficientModel& model, const DriftField& abar,
                        const ScaleParams& scale, ConstVec x, ConstVec y, std::size_t n,
                        const RandomPlan& plan) {
  require_samples(n);
  scale.validate();
  const auto stats = parallel_sample_stats(n, 1, [&](std::size_t i, std::span<double> v) {
    const auto r = simulate_coupled_pair(model, abar, scale, x, y, plan.for_sample(i));
    double s = 0.0;
    for (std::size_t j = 0; j < r.x_eps.size(); ++j) {
      const double d = r.x_eps[j] - r.x_bar[j];
      s += d * d;
    }
    v[0] = std::sqrt(s);
  });
  return stats[0].estimate();
}

RateFit fit_rate(const std::vector<RatePoint>& points) {
  std::set<double> seen;
  for (const auto& p : points) {
    if (!(p.epsilon > 0.0) || !std::isfinite(p.epsilon)) {
      throw InvalidInputError("fit_rate: epsilons must be positive");
    }
    if (!seen.insert(p.epsilon).second) throw InvalidInputError("fit_rate: repeated epsilon");
  }

  RateFit fit;
  for (const auto& p : points) {
    if (!std::isfinite(p.error) || !(std::abs(p.error) > 2.0 * p.std_error)) {
      fit.excluded.push_back({p.epsilon, p.error, p.std_error, "|error| <= 2 stderr"});
    } else {
      fit.points.push_back(p);
    }
  }
  if (fit.points.size() < 3) {
    throw InsufficientDataError("fit_rate: fewer than 3 usable points (" +
                                    std::to_string(fit.points.size()) + " of " +
                                    std::to_string(points.size()) + ")",
                                fit.excluded);
  }

  const std::size_t k = fit.points.size();
  std::vector<double> lx(k), ly(k), w(k, 1.0);
  double min_rel = INFINITY;
  for (std::size_t i = 0; i < k; ++i) {
    lx[i] = std::log(fit.points[i].epsilon);
    ly[i] = std::log(std::abs(fit.points[i].error));
    const double rel = fit.points[i].std_error / std::abs(fit.points[i].error);
    if (rel > 0.0) min_rel = std::min(min_rel, rel);
  }
  const bool weighted = std::isfinite(min_rel);
  if (weighted) {
    for (std::size_t i = 0; i < k; ++i) {
      double rel = fit.points[i].std_error / std::abs(fit.points[i].error);
      if (!(rel > 0.0)) rel = min_rel;
      w[i] = 1.0 / (rel * rel);
    }
  }

  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    sw += w[i];
    sx += w[i] * lx[i];
    sy += w[i] * ly[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += w[i] * (lx[i] - mx) * (lx[i] - mx);
    sxy += w[i] * (lx[i] - mx) * (ly[i] - my);
    syy += w[i] * (ly[i] - my) * (ly[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;

  double ssr = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ssr += w[i] * r * r;
  }
  fit.r_squared = syy > 0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;

  // Weighted fits take the weights as known variances, inflated by the
  // reduced chi-square when the scatter exceeds them; unweighted fits use
  // the residual variance.
  const double dof = static_cast<double>(k - 2);
  const double scale = weighted ? std::max(1.0, ssr / dof) : ssr / dof;
  const double half = 1.96 * std::sqrt(scale / sxx);
  fit.ci_low = fit.slope - half;
  fit.ci_high = fit.slope + half;
  return fit;
}

std::size_t samples_for_epsilon(std::size_t n0, double eps0, double eps) {
  return static_cast<std::size_t>(
      std::ceil(static_cast<double>(n0) * std::max(1.0, eps0 / eps) - 1e-9));
}

void validate_epsilons(const std::vector<double>& epsilons) {
  if (epsilons.empty()) throw InvalidInputError("epsilon list is empty");
  std::set<double> seen;
  for (double e : epsilons) {
    if (!(e > 0.0) || e > 1.0) throw InvalidInputError("epsilons must lie in (0, 1]");
    if (!seen.insert(e).second) throw InvalidInputError("epsilons must be distinct");
  }
}

namespace {

template <class Estimator>
std::vector<SweepPoint> sweep(const std::vector<double>& epsilons, const SweepSettings& s,
                              const RandomPlan& plan, Estimator&& estimate) {
  validate_epsilons(epsilons);
  const double eps_min = *std::min_element(epsilons.begin(), epsilons.end());
  const double eps0 = *std::max_element(epsilons.begin(), epsilons.end());
  const double dt = s.dt.value_or(s.dt_fast_factor * eps_min);
  std::vector<SweepPoint> out;
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    const double eps = epsilons[k];
    const std::size_t n = s.grow_n ? samples_for_epsilon(s.n0, eps0, eps) : s.n0;
    ScaleParams scale{eps, s.T, dt, s.dt_fast_factor};
    out.push_back({eps, estimate(scale, n, plan.derive(k)), n, dt});
  }
  return out;
}

}  // namespace

std::vector<SweepPoint> weak_error_sweep(const CoefficientModel& model, const DriftField& abar,
                                         ConstVec x, ConstVec y, const Observable& obs,
                                         const std::vector<double>& epsilons,
                                         const SweepSettings& settings, const RandomPlan& plan) {
  return sweep(epsilons, settings, plan,
               [&](const ScaleParams& scale, std::size_t n, const RandomPlan& p) {
                 return weak_error(model, abar, scale, x, y, obs, n, p, settings.coupled);
               });
}

std::vector<SweepPoint> strong_error_sweep(const CoefficientModel& model,
                                           const DriftField& abar, ConstVec x, ConstVec y,
                                           const std::vector<double>& epsilons,
                                           const SweepSettings& settings,
                                           const RandomPlan& plan) {
  return sweep(epsilons, settings, plan,
               [&](const ScaleParams& scale, std::size_t n, const RandomPlan& p) {
                 return strong_error(model, abar, scale, x, y, n, p);
               });
}

std::vector<RatePoint> rate_points(const std::vector<SweepPoint>& sweep) {
  std::vector<RatePoint> out;
  for (const auto& p : sweep) out.push_back({p.epsilon, p.error.mean, p.error.std_error});
  return out;
}

}  // namespace slowfast
