#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slowfast/error.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model.hpp"
#include "slowfast/random.hpp"
#include "slowfast/statistics.hpp"

namespace slowfast {

/// Test function phi on the slow space.
struct Observable {
  std::string name;
  std::function<double(ConstVec)> phi;
  std::function<void(ConstVec, MutVec)> grad;  // optional; finite differences otherwise
  std::string smoothness = "C3b";

  double operator()(ConstVec x) const { return phi(x); }

  /// Gradient at x, analytic when available, else central differences with
  /// step h * max(1, |x_i|).
  void gradient(ConstVec x, MutVec out, double h = 1e-5) const;

  static Observable tanh_sum();           // sum_i tanh(x_i)
  static Observable coordinate(std::size_t i = 0);  // x_i
  static Observable constant(double value = 1.0);
  static Observable norm();               // |x|, 1-Lipschitz but not smooth at 0
};

/// Looks up a built-in observable: "tanh", "identity", "constant", "norm".
Observable observable_by_name(const std::string& name);

/// E phi(X^eps_T(x, y)); sample i uses plan.for_sample(i).
MCEstimate estimate_u_eps(const CoefficientModel& model, const ScaleParams& scale, ConstVec x,
                          ConstVec y, const Observable& obs, std::size_t n,
                          const RandomPlan& plan);

/// E phi(Xbar_T(x)); sample i uses plan.for_sample(i).
MCEstimate estimate_u_bar(const DriftField& abar, const CoefficientModel& model, ConstVec x,
                          const Observable& obs, double T, double dt, std::size_t n,
                          const RandomPlan& plan);

/// Both expectations and their difference. Coupled: one pass per sample on
/// a shared plan, difference averaged per sample. Uncoupled: independent
/// plans derived from `plan`, difference of means.
struct WeakErrorDetail {
  MCEstimate u_eps;
  MCEstimate u_bar;
  MCEstimate difference;
};

WeakErrorDetail weak_error_detail(const CoefficientModel& model, const DriftField& abar,
                                  const ScaleParams& scale, ConstVec x, ConstVec y,
                                  const Observable& obs, std::size_t n, const RandomPlan& plan,
                                  bool coupled = true);

/// E phi(X^eps_T) - E phi(Xbar_T).
MCEstimate weak_error(const CoefficientModel& model, const DriftField& abar,
                      const ScaleParams& scale, ConstVec x, ConstVec y, const Observable& obs,
                      std::size_t n, const RandomPlan& plan, bool coupled = true);

/// E |X^eps_T - Xbar_T| under synchronous coupling of B and P.
MCEstimate strong_error(const CoefficientModel& model, const DriftField& abar,
                        const ScaleParams& scale, ConstVec x, ConstVec y, std::size_t n,
                        const RandomPlan& plan);

struct RatePoint {
  double epsilon = 0.0;
  double error = 0.0;
  double std_error = 0.0;
};

/// Weighted least squares of log|error| on log(epsilon).
struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double ci_low = 0.0;   // 95% interval for the slope
  double ci_high = 0.0;
  std::vector<RatePoint> points;             // points used in the fit
  std::vector<ExcludedPoint> excluded;       // statistically zero points
};

/// Points with |error| <= 2 stderr are excluded and reported. Weights are the
/// inverse variances of log|error| (delta method: (stderr/|error|)^2); with
/// all stderr zero the fit is unweighted. Throws InvalidInputError for
/// nonpositive or repeated epsilons, InsufficientDataError with fewer than 3
/// usable points.
RateFit fit_rate(const std::vector<RatePoint>& points);

/// n(eps) = ceil(n0 * max(1, eps0 / eps)).
std::size_t samples_for_epsilon(std::size_t n0, double eps0, double eps);

struct SweepSettings {
  double T = 1.0;
  std::size_t n0 = 100000;
  bool grow_n = true;           // apply samples_for_epsilon; else n0 at every eps
  std::optional<double> dt;     // default 0.1 * min(epsilons)
  double dt_fast_factor = 0.1;
  bool coupled = true;          // weak sweeps only
};

struct SweepPoint {
  double epsilon = 0.0;
  MCEstimate error;
  std::size_t n = 0;
  double dt = 0.0;
};

/// Error per epsilon; epsilon index k runs on plan.derive(k) so the points
/// are independent.
std::vector<SweepPoint> weak_error_sweep(const CoefficientModel& model, const DriftField& abar,
                                         ConstVec x, ConstVec y, const Observable& obs,
                                         const std::vector<double>& epsilons,
                                         const SweepSettings& settings, const RandomPlan& plan);

std::vector<SweepPoint> strong_error_sweep(const CoefficientModel& model,
                                           const DriftField& abar, ConstVec x, ConstVec y,
                                           const std::vector<double>& epsilons,
                                           const SweepSettings& settings,
                                           const RandomPlan& plan);

std::vector<RatePoint> rate_points(const std::vector<SweepPoint>& sweep);

/// Validates an epsilon list: nonempty, distinct, each in (0, 1].
void validate_epsilons(const std::vector<double>& epsilons);

}  // namespace slowfast
