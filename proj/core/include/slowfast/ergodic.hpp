#pragma once

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "slowfast/integrate.hpp"
#include "slowfast/model.hpp"
#include "slowfast/random.hpp"
#include "slowfast/statistics.hpp"

namespace slowfast {

enum class AbarMethod {
  kTimeAverage,  // (1/(H-B)) * integral over [B, H] of a(x, Y_s) along each path
  kEnsemble,     // a(x, Y_H) averaged over independent paths
};

struct AbarSettings {
  AbarMethod method = AbarMethod::kTimeAverage;
  double burn_in = 10.0;
  double horizon = 100.0;
  std::size_t n_paths = 16;
  double dt = 0.01;
  std::vector<double> y0;     // initial fast state; zeros when empty
  std::size_t batches = 32;   // batch means of a single path (time average)
};

/// Estimate of the averaged drift at one x, per coordinate.
struct AbarEstimate {
  std::vector<double> value;
  std::vector<double> std_error;
  std::size_t n_paths = 0;
};

/// Monte Carlo estimate of abar(x) = integral of a(x, y) mu^x(dy).
/// Time-average standard errors: with several paths each whole-path average
/// is one (independent) batch; a single path is split into `batches`
/// non-overlapping batch means. Ensemble standard errors from the sample
/// variance.
AbarEstimate estimate_abar(const CoefficientModel& model, ConstVec x,
                           const AbarSettings& settings, const RandomPlan& plan);

/// Mixing constants derived from the dissipativity probe: burn_in = 10/beta,
/// horizon = 100/beta. Throws InvalidModelError when beta_hat <= 0.
struct ErgodicDefaults {
  double beta_hat = 0.0;
  double burn_in = 0.0;
  double horizon = 0.0;
};

ErgodicDefaults ergodic_defaults(const CoefficientModel& model);

/// The averaged drift, either in closed form or estimated on demand.
///
/// Estimated values are computed at the centre of the quantization cell of
/// the query (quantum q per coordinate) on a substream fixed by that cell,
/// then cached. Values are therefore a pure function of the cell, whatever
/// the order of queries or the number of workers. Copies share the cache.
class AveragedDrift {
 public:
  enum class Source { kAnalytic, kEstimated };

  static AveragedDrift analytic(const CoefficientModel& model);
  static AveragedDrift estimated(const CoefficientModel& model, AbarSettings settings,
                                 const RandomPlan& plan, double quantum = 1e-3);
  /// Analytic when the model provides it, else estimated with defaults from
  /// ergodic_defaults().
  static AveragedDrift for_model(const CoefficientModel& model, const RandomPlan& plan);

  Source source() const noexcept;
  double quantum() const noexcept;

  void operator()(ConstVec x, MutVec out) const;
  /// Value with standard errors (zero for the analytic source).
  AbarEstimate query(ConstVec x) const;

  DriftField field() const;
  std::size_t cache_size() const;

  /// Relative central-difference step suited to this drift: 1e-5 for the
  /// analytic source, several quanta for the estimated one.
  double fd_step() const noexcept;

 private:
  struct State;
  explicit AveragedDrift(std::shared_ptr<State> state) : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
};

struct MixingEstimate {
  /// Fitted exponent r of E|Y_t(y1) - Y_t(y2)|^2 ~ C e^{r t}; negative when
  /// the frozen flow contracts.
  double beta_hat_sq = 0.0;
  std::vector<std::pair<double, double>> curve;  // (t, mean squared distance)
  double final_spread = 0.0;  // sample variance across paths of the squared distance at the horizon
  std::size_t fit_points = 0;
};

/// Two frozen paths from y1 and y2 driven by the same W and N. The exponent
/// is a least-squares fit of log(curve) on t over the points whose value
/// stays above 1e-10 of the initial distance.
MixingEstimate estimate_mixing_rate(const CoefficientModel& model, ConstVec x, ConstVec y1,
                                    ConstVec y2, double horizon, std::size_t n_paths,
                                    const RandomPlan& plan, double dt = 0.01,
                                    std::size_t curve_points = 100);

/// Stationary second moment of |Y|^2 under mu^x, from the ensemble at
/// `horizon`.
MCEstimate estimate_invariant_moment(const CoefficientModel& model, ConstVec x,
                                     double horizon, std::size_t n_paths,
                                     const RandomPlan& plan, double dt = 0.01,
                                     ConstVec y0 = {});

}  // namespace slowfast
