#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "slowfast/integrate.hpp"
#include "slowfast/model.hpp"
#include "slowfast/random.hpp"
#include "slowfast/statistics.hpp"
#include "slowfast/weak_error.hpp"

namespace slowfast {

struct DerivativeOptions {
  double phi_step = 1e-5;        // phi' by central differences when obs.grad is absent
  VariationOptions variation{};  // coefficient derivatives inside the variation process
};

/// D_x ubar(T, x) . k = E[ grad phi(Xbar_T) . eta_T ] with eta the first
/// variation started at k.
MCEstimate estimate_Dx_ubar(const DriftField& abar, const CoefficientModel& model,
                            const Observable& obs, double T, ConstVec x, ConstVec direction,
                            std::size_t n, double dt, const RandomPlan& plan,
                            const DerivativeOptions& options = {});

/// Cross-check: per-sample central difference
/// (phi(Xbar_T(x + delta k)) - phi(Xbar_T(x - delta k))) / (2 delta)
/// with both paths on the same plan.
MCEstimate estimate_Dx_ubar_fd(const DriftField& abar, const CoefficientModel& model,
                               const Observable& obs, double T, ConstVec x, ConstVec direction,
                               std::size_t n, double dt, const RandomPlan& plan,
                               double delta = 1e-3);

/// Gradient of ubar(T, .) at x, one coordinate direction per entry. Entry i
/// runs on plan.derive(i).
std::vector<MCEstimate> estimate_grad_ubar(const DriftField& abar,
                                           const CoefficientModel& model,
                                           const Observable& obs, double T, ConstVec x,
                                           std::size_t n, double dt, const RandomPlan& plan,
                                           const DerivativeOptions& options = {});

/// Memo of grad ubar keyed by (t, x quantized to `quantum`); concurrent
/// readers, single writer.
class GradientCache {
 public:
  explicit GradientCache(double quantum = 1e-3) : quantum_(quantum) {}

  template <class Compute>
  std::vector<MCEstimate> get(double t, ConstVec x, Compute&& compute) {
    Key key = make_key(t, x);
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    std::vector<MCEstimate> value = compute();
    std::unique_lock lock(mutex_);
    return cache_.emplace(std::move(key), std::move(value)).first->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
  }

 private:
  using Key = std::vector<long long>;
  Key make_key(double t, ConstVec x) const;

  double quantum_;
  mutable std::shared_mutex mutex_;
  std::map<Key, std::vector<MCEstimate>> cache_;
};

/// rho(t, x, y) = (a(x, y) - abar(x)) . D_x ubar(t, x).
MCEstimate estimate_rho(const CoefficientModel& model, const DriftField& abar,
                        const Observable& obs, double t, ConstVec x, ConstVec y, std::size_t n,
                        double dt, const RandomPlan& plan, const DerivativeOptions& options = {});

/// rho from a precomputed gradient estimate.
MCEstimate rho_from_gradient(const CoefficientModel& model, const DriftField& abar, ConstVec x,
                             ConstVec y, const std::vector<MCEstimate>& grad);

struct U1Settings {
  double S = 20.0;          // truncation horizon of the s-integral
  double dt_frozen = 0.01;  // step of the frozen paths
  std::size_t n_paths = 4096;       // frozen paths for the s-integral
  std::size_t n_derivative = 100000;  // samples for D_x ubar
  double dt_averaged = 1e-3;          // step of the averaged/variation paths
  DerivativeOptions derivative{};
};

struct U1Estimate {
  MCEstimate value;
  /// Per coordinate: integral over [0, S] of E[a_i(x, Y_s(y))] - abar_i(x).
  std::vector<MCEstimate> centered_integral;
  std::vector<MCEstimate> gradient;  // D_x ubar(t, x)
  double tail_bound = 0.0;
  double beta_hat = 0.0;
  std::vector<std::string> warnings;
};

/// u1(t, x, y) = int_0^S E rho(t, x, Y^x_s(y)) ds with trapezoidal quadrature
/// along one frozen path per sample. The tail beyond S is bounded by
///   |D_x ubar| L_a sqrt(E|y - Z|^2) (2/beta) exp(-beta S / 2),
/// Z ~ mu^x approximated by the path end points, L_a the Lipschitz probe of
/// a in y. A warning is recorded when that bound exceeds the stderr.
/// Throws InvalidInputError when S < 10 / beta_hat.
U1Estimate estimate_u1(const CoefficientModel& model, const DriftField& abar,
                       const Observable& obs, double t, ConstVec x, ConstVec y,
                       const U1Settings& settings, const RandomPlan& plan);

/// Same, with D_x ubar(t, x) supplied.
U1Estimate estimate_u1_with_gradient(const CoefficientModel& model, const DriftField& abar,
                                     ConstVec x, ConstVec y,
                                     const std::vector<MCEstimate>& grad,
                                     const U1Settings& settings, const RandomPlan& plan);

struct ExpansionReport {
  double epsilon = 0.0;
  MCEstimate u_eps;
  MCEstimate u_bar;
  MCEstimate u1_hat;
  MCEstimate r_eps;  // mean = u_eps - u_bar - epsilon * u1_hat exactly
  MCEstimate difference;  // paired u_eps - u_bar
  double S = 0.0;
  double tail_bound = 0.0;
  std::size_t n = 0;
  double dt = 0.0;
  std::vector<std::string> warnings;
};

struct ResidualSettings {
  double T = 1.0;
  std::size_t n0 = 100000;  // n(eps) rule of the weak-error sweep
  std::optional<double> dt; // default 0.1 * min(epsilons)
  U1Settings u1{};
};

/// Per-epsilon expansion reports. u1 and D_x ubar are computed once per
/// (T, x, y); the paired difference u_eps - u_bar uses synchronous coupling
/// and its stderr is combined with epsilon * stderr(u1) for r_eps.
std::vector<ExpansionReport> residual_check(const CoefficientModel& model,
                                            const DriftField& abar, const Observable& obs,
                                            ConstVec x, ConstVec y,
                                            const std::vector<double>& epsilons,
                                            const ResidualSettings& settings,
                                            const RandomPlan& plan);

/// Boundedness of |r|/eps across a report list:
///   max_eps (|r|/eps - 3 se/eps)_+ <= ratio * min_eps (|r|/eps + 3 se/eps).
struct ResidualBoundedness {
  double max_lower = 0.0;
  double min_upper = 0.0;
  bool bounded = false;
};

ResidualBoundedness residual_boundedness(const std::vector<ExpansionReport>& reports,
                                         double ratio = 3.0);

}  // namespace slowfast
