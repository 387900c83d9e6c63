#include "slowfast/ergodic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <shared_mutex>

#include "path_walker.hpp"
#include "slowfast/error.hpp"

namespace slowfast {

namespace {

std::vector<double> initial_fast_state(const CoefficientModel& model, ConstVec y0) {
  if (y0.empty()) return std::vector<double>(model.dims().m, 0.0);
  if (y0.size() != model.dims().m) {
    throw InvalidInputError("initial fast state has wrong dimension");
  }
  return {y0.begin(), y0.end()};
}

void require_slow(const CoefficientModel& model, ConstVec x) {
  if (x.size() != model.dims().n) throw InvalidInputError("slow point has wrong dimension");
}

// Integral of a(x, Y_s) over [burn_in, horizon], split into batches by
// segment start time. Left-point sums: on the Euler chain they reproduce the
// stationary mean exactly, where the trapezoid rule is biased by the jumps
// (by -lambda2 h dt / 2 for a linear read).
class TimeAverageObserver {
 public:
  TimeAverageObserver(const CoefficientModel& model, ConstVec x, double burn_in, double horizon,
                      std::size_t batches)
      : model_(model),
        x_(x),
        burn_in_(burn_in),
        span_(horizon - burn_in),
        batches_(batches),
        integral_(batches * model.dims().n, 0.0),
        length_(batches, 0.0),
        a0_(model.dims().n) {}

  void segment(double t0, double t1, ConstVec y_begin, ConstVec) {
    if (t1 <= burn_in_) return;
    double weight = t1 - t0;
    if (t0 < burn_in_) weight = t1 - burn_in_;
    const double start = std::max(t0, burn_in_);
    const auto j = std::min(
        batches_ - 1,
        static_cast<std::size_t>(std::floor((start - burn_in_) / span_ * static_cast<double>(batches_))));
    model_.a(x_, y_begin, a0_);
    const std::size_t n = a0_.size();
    for (std::size_t i = 0; i < n; ++i) integral_[j * n + i] += a0_[i] * weight;
    length_[j] += weight;
  }
  void node(double, ConstVec, std::uint8_t) {}

  std::size_t batches() const { return batches_; }
  double length(std::size_t j) const { return length_[j]; }
  double integral(std::size_t j, std::size_t i) const { return integral_[j * a0_.size() + i]; }

 private:
  const CoefficientModel& model_;
  ConstVec x_;
  double burn_in_;
  double span_;
  std::size_t batches_;
  std::vector<double> integral_;
  std::vector<double> length_;
  std::vector<double> a0_;
};

template <class Observer>
void run_frozen(const CoefficientModel& model, ConstVec x, ConstVec y0, double horizon,
                double dt, const RandomPlan& plan, Observer& observer) {
  const Dims& d = model.dims();
  const JumpSchedule jumps =
      sample_jump_times(model.lambda2(), horizon, plan, NoiseRole::kFastJumps);
  const auto noise = detail::make_walk_noise(plan, nullptr, &jumps, d.d1, d.d2, dt, horizon);
  detail::FrozenVisitor<Observer> visitor(model, x, y0, observer);
  detail::walk(noise, 0.0, horizon, visitor);
}

}  // namespace

AbarEstimate estimate_abar(const CoefficientModel& model, ConstVec x,
                           const AbarSettings& settings, const RandomPlan& plan) {
  require_slow(model, x);
  if (!(settings.burn_in > 0.0) || !(settings.horizon > settings.burn_in)) {
    throw InvalidInputError("estimate_abar: requires horizon > burn_in > 0");
  }
  if (settings.n_paths == 0) throw InvalidInputError("estimate_abar: n_paths must be > 0");
  if (!(settings.dt > 0.0)) throw InvalidInputError("estimate_abar: dt must be > 0");
  if (settings.batches == 0) throw InvalidInputError("estimate_abar: batches must be > 0");
  const std::vector<double> y0 = initial_fast_state(model, settings.y0);
  const std::size_t n = model.dims().n;

  std::vector<RunningStats> stats;
  if (settings.method == AbarMethod::kEnsemble) {
    stats = parallel_sample_stats(settings.n_paths, n, [&](std::size_t i, std::span<double> out) {
      const auto y = frozen_state_at(model, x, y0, settings.horizon, settings.dt,
                                     plan.for_sample(i));
      model.a(x, y, out);
    });
  } else {
    const std::size_t blocks = (settings.n_paths + kDefaultBlockSize - 1) / kDefaultBlockSize;
    std::vector<std::vector<RunningStats>> per_block(blocks, std::vector<RunningStats>(n));
    parallel_blocks(settings.n_paths, kDefaultBlockSize,
                    [&](std::size_t b, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        TimeAverageObserver obs(model, x, settings.burn_in, settings.horizon,
                                                settings.batches);
                        try {
                          run_frozen(model, x, y0, settings.horizon, settings.dt,
                                     plan.for_sample(i), obs);
                        } catch (const BlowUpError& e) {
                          throw e.with_sample(i);
                        }
                        if (settings.n_paths > 1) {
                          // Paths are independent: each whole-path average is
                          // one batch.
                          double length = 0.0;
                          std::vector<double> total(n, 0.0);
                          for (std::size_t j = 0; j < obs.batches(); ++j) {
                            length += obs.length(j);
                            for (std::size_t c = 0; c < n; ++c) total[c] += obs.integral(j, c);
                          }
                          for (std::size_t c = 0; c < n; ++c) per_block[b][c].push(total[c] / length);
                          continue;
                        }
                        for (std::size_t j = 0; j < obs.batches(); ++j) {
                          if (obs.length(j) <= 0.0) continue;
                          for (std::size_t c = 0; c < n; ++c) {
                            per_block[b][c].push(obs.integral(j, c) / obs.length(j));
                          }
                        }
                      }
                    });
    stats.assign(n, RunningStats{});
    for (const auto& block : per_block) {
      for (std::size_t c = 0; c < n; ++c) stats[c].merge(block[c]);
    }
  }

  AbarEstimate est;
  est.n_paths = settings.n_paths;
  for (const auto& s : stats) {
    const MCEstimate e = s.estimate();
    est.value.push_back(e.mean);
    est.std_error.push_back(e.std_error);
  }
  return est;
}

ErgodicDefaults ergodic_defaults(const CoefficientModel& model) {
  const AssumptionReport report =
      check_dissipativity(model, default_dissipativity_probe(model.dims()));
  const double beta = report.beta_hat.value_or(0.0);
  if (!(beta > 0.0)) {
    throw InvalidModelError("model '" + model.name() +
                            "' is not dissipative on the probe set (beta_hat <= 0)");
  }
  return {beta, 10.0 / beta, 100.0 / beta};
}

// ---------------------------------------------------------------------------

struct AveragedDrift::State {
  State(CoefficientModel m, Source src, AbarSettings set, RandomPlan p, double q)
      : model(std::move(m)), source(src), settings(std::move(set)), plan(p), quantum(q) {}

  CoefficientModel model;
  Source source;
  AbarSettings settings;
  RandomPlan plan;
  double quantum = 1e-3;
  mutable std::shared_mutex mutex;
  mutable std::map<std::vector<long long>, AbarEstimate> cache;
};

AveragedDrift AveragedDrift::analytic(const CoefficientModel& model) {
  if (!model.has_analytic_abar()) {
    throw InvalidModelError("model '" + model.name() + "' has no analytic averaged drift");
  }
  return AveragedDrift(std::make_shared<State>(model, Source::kAnalytic, AbarSettings{}, RandomPlan{}, 0.0));
}

AveragedDrift AveragedDrift::estimated(const CoefficientModel& model, AbarSettings settings,
                                       const RandomPlan& plan, double quantum) {
  if (!(quantum > 0.0)) throw InvalidInputError("AveragedDrift: quantum must be > 0");
  if (!(settings.burn_in > 0.0) || !(settings.horizon > settings.burn_in)) {
    throw InvalidInputError("AveragedDrift: requires horizon > burn_in > 0");
  }
  return AveragedDrift(std::make_shared<State>(
      model, Source::kEstimated, std::move(settings), plan, quantum));
}

AveragedDrift AveragedDrift::for_model(const CoefficientModel& model, const RandomPlan& plan) {
  if (model.has_analytic_abar()) return analytic(model);
  const ErgodicDefaults defaults = ergodic_defaults(model);
  AbarSettings settings;
  settings.burn_in = defaults.burn_in;
  settings.horizon = defaults.horizon;
  return estimated(model, settings, plan);
}

AveragedDrift::Source AveragedDrift::source() const noexcept { return state_->source; }
double AveragedDrift::quantum() const noexcept { return state_->quantum; }

AbarEstimate AveragedDrift::query(ConstVec x) const {
  const State& s = *state_;
  require_slow(s.model, x);
  if (s.source == Source::kAnalytic) {
    AbarEstimate e;
    e.value.resize(x.size());
    e.std_error.assign(x.size(), 0.0);
    s.model.abar_analytic(x, e.value);
    return e;
  }

  std::vector<long long> key(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    key[i] = static_cast<long long>(std::llround(x[i] / s.quantum));
  }
  {
    std::shared_lock lock(s.mutex);
    if (auto it = s.cache.find(key); it != s.cache.end()) return it->second;
  }
  std::vector<double> centre(x.size());
  std::uint64_t tag = 0x243F6A8885A308D3ull;
  for (std::size_t i = 0; i < x.size(); ++i) {
    centre[i] = static_cast<double>(key[i]) * s.quantum;
    tag = mix64(tag ^ static_cast<std::uint64_t>(key[i]));
  }
  AbarEstimate e = estimate_abar(s.model, centre, s.settings, s.plan.derive(tag));
  std::unique_lock lock(s.mutex);
  return s.cache.emplace(std::move(key), std::move(e)).first->second;
}

void AveragedDrift::operator()(ConstVec x, MutVec out) const {
  if (state_->source == Source::kAnalytic) {
    state_->model.abar_analytic(x, out);
    return;
  }
  const AbarEstimate e = query(x);
  std::copy(e.value.begin(), e.value.end(), out.begin());
}

DriftField AveragedDrift::field() const {
  return [self = *this](ConstVec x, MutVec out) { self(x, out); };
}

std::size_t AveragedDrift::cache_size() const {
  std::shared_lock lock(state_->mutex);
  return state_->cache.size();
}

double AveragedDrift::fd_step() const noexcept {
  return state_->source == Source::kAnalytic ? 1e-5 : 4.0 * state_->quantum;
}

// ---------------------------------------------------------------------------

namespace {

class SyncPairVisitor {
 public:
  static constexpr bool kSlow = false;
  static constexpr bool kFast = true;

  SyncPairVisitor(const CoefficientModel& model, ConstVec x, ConstVec y1, ConstVec y2,
                  double sample_every, std::vector<double>& samples)
      : model_(model),
        x_(x.begin(), x.end()),
        y1_(y1.begin(), y1.end()),
        y2_(y2.begin(), y2.end()),
        f_(y1.size()),
        g_(y1.size() * model.dims().d2),
        h_(y1.size()),
        sample_every_(sample_every),
        next_sample_(sample_every),
        samples_(samples) {
    samples_.push_back(distance_sq());
  }

  void begin_slow() {}
  void end_slow(double, ConstVec, bool, double) {}

  void fast(double len, ConstVec dW, bool jump, double) {
    step(y1_, len, dW, jump);
    step(y2_, len, dW, jump);
  }

  void node(double t, std::uint8_t) {
    detail::check_finite(y1_, t);
    detail::check_finite(y2_, t);
    if (t >= next_sample_ - 1e-9 * sample_every_) {
      samples_.push_back(distance_sq());
      next_sample_ += sample_every_;
    }
  }

 private:
  void step(std::vector<double>& y, double len, ConstVec dW, bool jump) {
    model_.f(x_, y, f_);
    model_.g(x_, y, g_);
    detail::euler_fast_update(y, f_, g_, dW, len, 1.0, 1.0);
    if (jump) {
      model_.h(x_, y, h_);
      detail::add_in_place(y, h_);
    }
  }

  double distance_sq() const {
    double s = 0.0;
    for (std::size_t i = 0; i < y1_.size(); ++i) s += (y1_[i] - y2_[i]) * (y1_[i] - y2_[i]);
    return s;
  }

  const CoefficientModel& model_;
  std::vector<double> x_, y1_, y2_, f_, g_, h_;
  double sample_every_;
  double next_sample_;
  std::vector<double>& samples_;
};

}  // namespace

MixingEstimate estimate_mixing_rate(const CoefficientModel& model, ConstVec x, ConstVec y1,
                                    ConstVec y2, double horizon, std::size_t n_paths,
                                    const RandomPlan& plan, double dt,
                                    std::size_t curve_points) {
  require_slow(model, x);
  const std::vector<double> a = initial_fast_state(model, y1);
  const std::vector<double> b = initial_fast_state(model, y2);
  if (a == b) throw InvalidInputError("estimate_mixing_rate: y1 and y2 must differ");
  if (!(horizon > 0.0) || !(dt > 0.0)) {
    throw InvalidInputError("estimate_mixing_rate: horizon and dt must be > 0");
  }
  if (n_paths == 0 || curve_points == 0) {
    throw InvalidInputError("estimate_mixing_rate: n_paths and curve_points must be > 0");
  }

  const std::size_t steps = base_step_count(horizon, dt);
  const std::size_t stride = std::max<std::size_t>(1, steps / curve_points);
  const double sample_every = static_cast<double>(stride) * dt;
  const Dims& d = model.dims();

  std::size_t width = 0;
  {
    std::vector<double> probe;
    SyncPairVisitor counter(model, x, a, b, sample_every, probe);
    width = 1 + static_cast<std::size_t>(std::floor(horizon / sample_every + 1e-9));
  }

  const auto stats = parallel_sample_stats(n_paths, width, [&](std::size_t i, std::span<double> out) {
    const RandomPlan p = plan.for_sample(i);
    const JumpSchedule jumps = sample_jump_times(model.lambda2(), horizon, p, NoiseRole::kFastJumps);
    const auto noise = detail::make_walk_noise(p, nullptr, &jumps, d.d1, d.d2, dt, horizon);
    std::vector<double> samples;
    samples.reserve(width);
    SyncPairVisitor visitor(model, x, a, b, sample_every, samples);
    detail::walk(noise, 0.0, horizon, visitor);
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] = j < samples.size() ? samples[j] : samples.back();
    }
  });

  MixingEstimate est;
  for (std::size_t j = 0; j < width; ++j) {
    est.curve.emplace_back(std::min(horizon, static_cast<double>(j) * sample_every),
                           stats[j].mean());
  }
  est.final_spread = stats.back().variance();

  // Least-squares slope of log(value) against t over the resolvable window.
  const double floor_value = 1e-10 * est.curve.front().second;
  double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
  std::size_t k = 0;
  for (const auto& [t, v] : est.curve) {
    if (!(v > floor_value)) break;
    const double l = std::log(v);
    st += t;
    sl += l;
    stt += t * t;
    stl += t * l;
    ++k;
  }
  if (k < 2) throw InsufficientDataError("estimate_mixing_rate: fewer than 2 resolvable points", {});
  const double kk = static_cast<double>(k);
  est.beta_hat_sq = (kk * stl - st * sl) / (kk * stt - st * st);
  est.fit_points = k;
  return est;
}

MCEstimate estimate_invariant_moment(const CoefficientModel& model, ConstVec x, double horizon,
                                     std::size_t n_paths, const RandomPlan& plan, double dt,
                                     ConstVec y0) {
  require_slow(model, x);
  if (!(horizon > 0.0) || !(dt > 0.0)) {
    throw InvalidInputError("estimate_invariant_moment: horizon and dt must be > 0");
  }
  if (n_paths < 2) throw InvalidInputError("estimate_invariant_moment: n_paths must be >= 2");
  const std::vector<double> start = initial_fast_state(model, y0);
  const auto stats = parallel_sample_stats(n_paths, 1, [&](std::size_t i, std::span<double> out) {
    const auto y = frozen_state_at(model, x, start, horizon, dt, plan.for_sample(i));
    double s = 0.0;
    for (double e : y) s += e * e;
    out[0] = s;
  });
  return stats[0].estimate();
}

}  // namespace slowfast
