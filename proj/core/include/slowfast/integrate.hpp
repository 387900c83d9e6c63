#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "slowfast/model.hpp"
#include "slowfast/random.hpp"

namespace slowfast {

/// States with norm above this (or non-finite) abort integration.
inline constexpr double kBlowUpThreshold = 1e12;

/// Timescale ratio, horizon and base step of a coupled run.
struct ScaleParams {
  double epsilon = 1.0;
  double T = 1.0;
  double dt = 0.01;
  double dt_fast_factor = 0.1;  // dt must not exceed epsilon * dt_fast_factor

  /// Throws InvalidInputError unless 0 < epsilon <= 1, T > 0 and
  /// 0 < dt <= epsilon * dt_fast_factor.
  void validate() const;
};

/// A field x -> out on the slow space (e.g. the averaged drift).
using DriftField = std::function<void(ConstVec x, MutVec out)>;

enum JumpFlag : std::uint8_t {
  kNoJump = 0,
  kSlowJump = 1,  // P jumps at this node
  kFastJump = 2,  // N jumps at this node
};

/// Union of the uniform grid of step dt on [0, T] with every scheduled jump
/// time; the last base step is shortened when T is not a multiple of dt.
struct TimeGrid {
  std::vector<double> nodes;
  std::vector<std::uint8_t> flags;  // JumpFlag bits per node
};

TimeGrid make_time_grid(double T, double dt, const JumpSchedule* slow_jumps,
                        const JumpSchedule* fast_jumps);

/// Number of base steps covering [0, T].
std::size_t base_step_count(double T, double dt);

/// Node-by-node trajectory. `x` and `y` are flattened (n resp. m values per
/// node); `y` is empty for paths without a fast component.
struct PathRecord {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::uint8_t> flags;
};

struct CoupledResult {
  std::vector<double> x_T;
  std::vector<double> y_T;
  std::optional<PathRecord> path;
};

/// Jump-adapted Euler-Maruyama integrator of the coupled slow/fast system.
///
/// Slow nodes are the base grid plus P-jump times; the slow step uses the
/// state at the left end of each slow interval. The fast component is
/// sub-stepped at N-jump times as well. Brownian increments of each base
/// step are drawn once and split at interior jump times by a Brownian
/// bridge, so the noise of a base step does not depend on its subdivision.
/// Jump coefficients are evaluated at pre-jump (left-limit) states.
class CoupledIntegrator {
 public:
  /// Samples P (rate lambda1) and N (rate lambda2/epsilon) on (0, T].
  CoupledIntegrator(const CoefficientModel& model, const ScaleParams& scale,
                    const RandomPlan& plan);

  /// Advances (x, y) in place from t0 to t1; both must be base grid nodes
  /// (or t1 == T). Appends visited nodes to `record` when given.
  void advance(MutVec x, MutVec y, double t0, double t1, PathRecord* record = nullptr) const;

  const JumpSchedule& slow_jumps() const noexcept { return slow_jumps_; }
  const JumpSchedule& fast_jumps() const noexcept { return fast_jumps_; }

 private:
  const CoefficientModel& model_;
  ScaleParams scale_;
  RandomPlan plan_;
  JumpSchedule slow_jumps_;
  JumpSchedule fast_jumps_;
};

CoupledResult simulate_coupled(const CoefficientModel& model, const ScaleParams& scale,
                               ConstVec x0, ConstVec y0, const RandomPlan& plan,
                               bool record_path = false);

struct AveragedResult {
  std::vector<double> x_T;
  std::optional<PathRecord> path;
};

/// Euler-Maruyama for dX = abar(X) dt + b(X) dB + c(X-) dP on the slow grid.
/// Reads the same (B, P) substreams as simulate_coupled with the same plan,
/// which couples the two synchronously.
AveragedResult simulate_averaged(const DriftField& abar, const CoefficientModel& model,
                                 ConstVec x0, double T, double dt, const RandomPlan& plan,
                                 bool record_path = false);

/// Path of the frozen fast equation dY = f(x,Y) dt + g(x,Y) dW + h(x,Y-) dN,
/// N ~ Poisson(lambda2), sampled at every jump-adapted node.
struct FrozenPath {
  std::vector<double> t;
  std::vector<double> y;  // m values per node
};

FrozenPath simulate_frozen(const CoefficientModel& model, ConstVec x, ConstVec y0,
                           double horizon, double dt, const RandomPlan& plan);

/// Frozen state at `horizon` only.
std::vector<double> frozen_state_at(const CoefficientModel& model, ConstVec x, ConstVec y0,
                                    double horizon, double dt, const RandomPlan& plan);

struct CoupledPairResult {
  std::vector<double> x_eps;
  std::vector<double> y_eps;
  std::vector<double> x_bar;
};

/// simulate_coupled and simulate_averaged on one plan in a single pass (the
/// pair shares B and P). Results equal the two separate calls bit for bit.
CoupledPairResult simulate_coupled_pair(const CoefficientModel& model, const DriftField& abar,
                                        const ScaleParams& scale, ConstVec x0, ConstVec y0,
                                        const RandomPlan& plan);

struct FirstVariationResult {
  std::vector<double> x_T;
  std::vector<double> eta_T;
};

struct VariationOptions {
  /// Central-difference step for coefficient derivatives, relative to
  /// max(1, |x|). Raise it when abar is itself a noisy estimate.
  double fd_step = 1e-5;
};

/// Jointly integrates the averaged equation and its first variation
///   d eta = D abar(X) eta dt + D b(X) eta dB + D c(X-) eta- dP,  eta_0 = k,
/// with directional derivatives by central differences along eta.
FirstVariationResult simulate_first_variation(const DriftField& abar,
                                              const CoefficientModel& model, ConstVec x0,
                                              ConstVec direction, double T, double dt,
                                              const RandomPlan& plan,
                                              const VariationOptions& options = {});

}  // namespace slowfast
