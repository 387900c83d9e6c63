#include "slowfast/integrate.hpp"

#include <algorithm>
#include <cmath>

#include "path_walker.hpp"
#include "slowfast/error.hpp"

namespace slowfast {

using detail::check_finite;
using detail::euler_fast_update;
using detail::euler_slow_update;

void ScaleParams::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw InvalidInputError("ScaleParams: epsilon must lie in (0, 1]");
  }
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidInputError("ScaleParams: T must be > 0");
  if (!(dt > 0.0)) throw InvalidInputError("ScaleParams: dt must be > 0");
  if (!(dt_fast_factor > 0.0)) throw InvalidInputError("ScaleParams: dt_fast_factor must be > 0");
  if (dt > epsilon * dt_fast_factor * (1.0 + 1e-12)) {
    throw InvalidInputError("ScaleParams: dt must not exceed epsilon * dt_fast_factor");
  }
}

std::size_t base_step_count(double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0)) {
    throw InvalidInputError("time grid: horizon and step must be > 0");
  }
  return static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
}

TimeGrid make_time_grid(double T, double dt, const JumpSchedule* slow_jumps,
                        const JumpSchedule* fast_jumps) {
  const std::size_t steps = base_step_count(T, dt);
  TimeGrid grid;
  grid.nodes.reserve(steps + 1);
  grid.flags.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    grid.nodes.push_back(k == steps ? T : static_cast<double>(k) * dt);
    grid.flags.push_back(kNoJump);
  }
  auto merge = [&](const JumpSchedule* s, std::uint8_t flag) {
    if (!s) return;
    for (double tj : s->times) {
      if (tj > T) break;
      auto it = std::lower_bound(grid.nodes.begin(), grid.nodes.end(), tj);
      const auto pos = it - grid.nodes.begin();
      if (it != grid.nodes.end() && *it == tj) {
        grid.flags[static_cast<std::size_t>(pos)] |= flag;
      } else {
        grid.nodes.insert(it, tj);
        grid.flags.insert(grid.flags.begin() + pos, flag);
      }
    }
  };
  merge(slow_jumps, kSlowJump);
  merge(fast_jumps, kFastJump);
  return grid;
}

namespace {

inline void record_node(PathRecord* rec, double t, ConstVec x, ConstVec y, std::uint8_t flags) {
  if (!rec) return;
  rec->t.push_back(t);
  rec->x.insert(rec->x.end(), x.begin(), x.end());
  rec->y.insert(rec->y.end(), y.begin(), y.end());
  rec->flags.push_back(flags);
}

class CoupledVisitor {
 public:
  static constexpr bool kSlow = true;
  static constexpr bool kFast = true;

  CoupledVisitor(const CoefficientModel& model, double epsilon, MutVec x, MutVec y,
                 PathRecord* record)
      : model_(model),
        x_(x),
        y_(y),
        x_left_(x.size()),
        a_(x.size()),
        a_sub_(x.size()),
        b_(x.size() * model.dims().d1),
        c_(x.size()),
        f_(y.size()),
        g_(y.size() * model.dims().d2),
        h_(y.size()),
        inv_eps_(1.0 / epsilon),
        inv_sqrt_eps_(1.0 / std::sqrt(epsilon)),
        record_(record) {}

  void begin_slow() {
    detail::copy_into(x_, x_left_);
    drift_len_ = 0.0;
  }

  // The slow drift is a left-point sum over the fast sub-steps, so a fast
  // jump inside a slow step is felt from the jump time on. Holding
  // a(x, Y_start) for the whole step instead loses h * (t_end - tau) per jump,
  // an O(dt/eps) bias that does not vanish with eps.
  void fast(double len, ConstVec dW, bool jump, double) {
    if (drift_len_ == 0.0) {
      model_.a(x_left_, y_, a_);
    } else {
      model_.a(x_left_, y_, a_sub_);
      // Equal values are kept as is: reweighting would perturb the last bit,
      // and a drift that ignores y must match the averaged step exactly.
      for (std::size_t i = 0; i < a_.size(); ++i) {
        if (a_sub_[i] != a_[i]) a_[i] = (a_[i] * drift_len_ + a_sub_[i] * len) / (drift_len_ + len);
      }
    }
    drift_len_ += len;
    model_.f(x_left_, y_, f_);
    model_.g(x_left_, y_, g_);
    euler_fast_update(y_, f_, g_, dW, len, inv_eps_, inv_sqrt_eps_);
    if (jump) {
      model_.h(x_left_, y_, h_);
      detail::add_in_place(y_, h_);
    }
  }

  void end_slow(double len, ConstVec dB, bool jump, double) {
    model_.b(x_left_, b_);
    euler_slow_update(x_left_, a_, b_, dB, len, x_);
    if (jump) {
      model_.c(x_, c_);
      detail::add_in_place(x_, c_);
    }
  }

  void node(double t, std::uint8_t flags) {
    check_finite(x_, t);
    check_finite(y_, t);
    if (record_) record_node(record_, t, x_, y_, flags);
  }

 private:
  const CoefficientModel& model_;
  MutVec x_;
  MutVec y_;
  std::vector<double> x_left_, a_, a_sub_, b_, c_, f_, g_, h_;
  double drift_len_ = 0.0;  // length covered by the averaged drift in a_
  double inv_eps_;
  double inv_sqrt_eps_;
  PathRecord* record_;
};

class AveragedVisitor {
 public:
  static constexpr bool kSlow = true;
  static constexpr bool kFast = false;

  AveragedVisitor(const DriftField& abar, const CoefficientModel& model, MutVec x,
                  PathRecord* record)
      : abar_(abar),
        model_(model),
        x_(x),
        x_left_(x.size()),
        drift_(x.size()),
        b_(x.size() * model.dims().d1),
        c_(x.size()),
        record_(record) {}

  void begin_slow() {}
  void fast(double, ConstVec, bool, double) {}

  void end_slow(double len, ConstVec dB, bool jump, double) {
    detail::copy_into(x_, x_left_);
    abar_(x_left_, drift_);
    model_.b(x_left_, b_);
    euler_slow_update(x_left_, drift_, b_, dB, len, x_);
    if (jump) {
      model_.c(x_, c_);
      detail::add_in_place(x_, c_);
    }
  }

  void node(double t, std::uint8_t flags) {
    check_finite(x_, t);
    if (record_) record_node(record_, t, x_, {}, flags);
  }

 private:
  const DriftField& abar_;
  const CoefficientModel& model_;
  MutVec x_;
  std::vector<double> x_left_, drift_, b_, c_;
  PathRecord* record_;
};

class PairVisitor {
 public:
  static constexpr bool kSlow = true;
  static constexpr bool kFast = true;

  PairVisitor(const CoefficientModel& model, const DriftField& abar, double epsilon,
              CoupledPairResult& state)
      : coupled_(model, epsilon, state.x_eps, state.y_eps, nullptr),
        averaged_(abar, model, state.x_bar, nullptr) {}

  void begin_slow() { coupled_.begin_slow(); }
  void fast(double len, ConstVec dW, bool jump, double t) { coupled_.fast(len, dW, jump, t); }
  void end_slow(double len, ConstVec dB, bool jump, double t) {
    coupled_.end_slow(len, dB, jump, t);
    averaged_.end_slow(len, dB, jump, t);
  }
  void node(double t, std::uint8_t flags) {
    coupled_.node(t, flags);
    averaged_.node(t, flags);
  }

 private:
  CoupledVisitor coupled_;
  AveragedVisitor averaged_;
};

class VariationVisitor {
 public:
  static constexpr bool kSlow = true;
  static constexpr bool kFast = false;

  VariationVisitor(const DriftField& abar, const CoefficientModel& model, double fd_step,
                   FirstVariationResult& state)
      : abar_(abar),
        model_(model),
        fd_step_(fd_step),
        x_(state.x_T),
        eta_(state.eta_T),
        x_left_(x_.size()),
        drift_(x_.size()),
        b_(x_.size() * model.dims().d1),
        c_(x_.size()),
        probe_(x_.size()),
        tmp_plus_(x_.size() * model.dims().d1),
        tmp_minus_(x_.size() * model.dims().d1),
        d_drift_(x_.size()),
        d_b_(x_.size() * model.dims().d1),
        d_c_(x_.size()) {}

  void begin_slow() {}
  void fast(double, ConstVec, bool, double) {}

  void end_slow(double len, ConstVec dB, bool jump, double) {
    detail::copy_into(x_, x_left_);
    abar_(x_left_, drift_);
    model_.b(x_left_, b_);

    directional(x_left_, [this](ConstVec p, MutVec o) { abar_(p, o); }, d_drift_);
    directional(x_left_, [this](ConstVec p, MutVec o) { model_.b(p, o); }, d_b_);

    // eta_new = eta + (D abar eta) len + (D b eta) dB
    const std::size_t n = x_.size();
    const std::size_t d = dB.size();
    for (std::size_t i = 0; i < n; ++i) {
      double noise = 0.0;
      for (std::size_t j = 0; j < d; ++j) noise += d_b_[i * d + j] * dB[j];
      eta_[i] += d_drift_[i] * len + noise;
    }
    euler_slow_update(x_left_, drift_, b_, dB, len, x_);

    if (jump) {
      directional(x_, [this](ConstVec p, MutVec o) { model_.c(p, o); }, d_c_);
      model_.c(x_, c_);
      detail::add_in_place(eta_, d_c_);
      detail::add_in_place(x_, c_);
    }
  }

  void node(double t, std::uint8_t) {
    check_finite(x_, t);
    check_finite(eta_, t);
  }

 private:
  // out = D fn(at) . eta by central differences along eta.
  template <class Fn>
  void directional(ConstVec at, Fn&& fn, MutVec out) {
    double norm = 0.0;
    for (double e : eta_) norm += e * e;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    double scale = 0.0;
    for (double e : at) scale += e * e;
    const double h = fd_step_ * std::max(1.0, std::sqrt(scale));
    MutVec plus(tmp_plus_.data(), out.size());
    MutVec minus(tmp_minus_.data(), out.size());
    for (std::size_t i = 0; i < at.size(); ++i) probe_[i] = at[i] + h * eta_[i] / norm;
    fn(probe_, plus);
    for (std::size_t i = 0; i < at.size(); ++i) probe_[i] = at[i] - h * eta_[i] / norm;
    fn(probe_, minus);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (plus[i] - minus[i]) / (2.0 * h) * norm;
  }

  const DriftField& abar_;
  const CoefficientModel& model_;
  double fd_step_;
  std::vector<double>& x_;
  std::vector<double>& eta_;
  std::vector<double> x_left_, drift_, b_, c_, probe_, tmp_plus_, tmp_minus_, d_drift_, d_b_,
      d_c_;
};

void require_dims(ConstVec v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw InvalidInputError(std::string(what) + " has dimension " + std::to_string(v.size()) +
                            ", expected " + std::to_string(expected));
  }
}

}  // namespace

CoupledIntegrator::CoupledIntegrator(const CoefficientModel& model, const ScaleParams& scale,
                                     const RandomPlan& plan)
    : model_(model), scale_(scale), plan_(plan) {
  scale_.validate();
  slow_jumps_ = sample_jump_times(model.lambda1(), scale_.T, plan_, NoiseRole::kSlowJumps);
  fast_jumps_ = sample_jump_times(model.lambda2() / scale_.epsilon, scale_.T, plan_,
                                  NoiseRole::kFastJumps);
}

void CoupledIntegrator::advance(MutVec x, MutVec y, double t0, double t1,
                                PathRecord* record) const {
  const Dims& d = model_.dims();
  require_dims(x, d.n, "slow state");
  require_dims(y, d.m, "fast state");
  if (t1 < t0) throw InvalidInputError("CoupledIntegrator::advance: t1 < t0");
  const auto noise =
      detail::make_walk_noise(plan_, &slow_jumps_, &fast_jumps_, d.d1, d.d2, scale_.dt, scale_.T);
  CoupledVisitor visitor(model_, scale_.epsilon, x, y, record);
  if (record && record->t.empty()) record_node(record, t0, x, y, kNoJump);
  detail::walk(noise, t0, t1, visitor);
}

CoupledResult simulate_coupled(const CoefficientModel& model, const ScaleParams& scale,
                               ConstVec x0, ConstVec y0, const RandomPlan& plan,
                               bool record_path) {
  CoupledIntegrator integrator(model, scale, plan);
  CoupledResult result{{x0.begin(), x0.end()}, {y0.begin(), y0.end()}, std::nullopt};
  if (record_path) result.path.emplace();
  integrator.advance(result.x_T, result.y_T, 0.0, scale.T,
                     result.path ? &*result.path : nullptr);
  return result;
}

AveragedResult simulate_averaged(const DriftField& abar, const CoefficientModel& model,
                                 ConstVec x0, double T, double dt, const RandomPlan& plan,
                                 bool record_path) {
  const Dims& d = model.dims();
  require_dims(x0, d.n, "slow state");
  base_step_count(T, dt);
  const JumpSchedule slow = sample_jump_times(model.lambda1(), T, plan, NoiseRole::kSlowJumps);
  const auto noise = detail::make_walk_noise(plan, &slow, nullptr, d.d1, d.d2, dt, T);

  AveragedResult result{{x0.begin(), x0.end()}, std::nullopt};
  if (record_path) {
    result.path.emplace();
    record_node(&*result.path, 0.0, result.x_T, {}, kNoJump);
  }
  AveragedVisitor visitor(abar, model, result.x_T, result.path ? &*result.path : nullptr);
  detail::walk(noise, 0.0, T, visitor);
  return result;
}

namespace {

struct PathCollector {
  FrozenPath& path;
  void segment(double, double, ConstVec, ConstVec) {}
  void node(double t, ConstVec y, std::uint8_t) {
    path.t.push_back(t);
    path.y.insert(path.y.end(), y.begin(), y.end());
  }
};

}  // namespace

FrozenPath simulate_frozen(const CoefficientModel& model, ConstVec x, ConstVec y0,
                           double horizon, double dt, const RandomPlan& plan) {
  const Dims& d = model.dims();
  require_dims(x, d.n, "slow state");
  require_dims(y0, d.m, "fast state");
  base_step_count(horizon, dt);
  const JumpSchedule jumps =
      sample_jump_times(model.lambda2(), horizon, plan, NoiseRole::kFastJumps);
  const auto noise = detail::make_walk_noise(plan, nullptr, &jumps, d.d1, d.d2, dt, horizon);

  FrozenPath path;
  path.t.push_back(0.0);
  path.y.assign(y0.begin(), y0.end());
  PathCollector collector{path};
  detail::FrozenVisitor<PathCollector> visitor(model, x, y0, collector);
  detail::walk(noise, 0.0, horizon, visitor);
  return path;
}

std::vector<double> frozen_state_at(const CoefficientModel& model, ConstVec x, ConstVec y0,
                                    double horizon, double dt, const RandomPlan& plan) {
  const Dims& d = model.dims();
  require_dims(x, d.n, "slow state");
  require_dims(y0, d.m, "fast state");
  base_step_count(horizon, dt);
  const JumpSchedule jumps =
      sample_jump_times(model.lambda2(), horizon, plan, NoiseRole::kFastJumps);
  const auto noise = detail::make_walk_noise(plan, nullptr, &jumps, d.d1, d.d2, dt, horizon);
  detail::NullFrozenObserver observer;
  detail::FrozenVisitor<detail::NullFrozenObserver> visitor(model, x, y0, observer);
  detail::walk(noise, 0.0, horizon, visitor);
  return visitor.state();
}

CoupledPairResult simulate_coupled_pair(const CoefficientModel& model, const DriftField& abar,
                                        const ScaleParams& scale, ConstVec x0, ConstVec y0,
                                        const RandomPlan& plan) {
  scale.validate();
  const Dims& d = model.dims();
  require_dims(x0, d.n, "slow state");
  require_dims(y0, d.m, "fast state");
  const JumpSchedule slow =
      sample_jump_times(model.lambda1(), scale.T, plan, NoiseRole::kSlowJumps);
  const JumpSchedule fast = sample_jump_times(model.lambda2() / scale.epsilon, scale.T, plan,
                                              NoiseRole::kFastJumps);
  const auto noise = detail::make_walk_noise(plan, &slow, &fast, d.d1, d.d2, scale.dt, scale.T);

  CoupledPairResult state{{x0.begin(), x0.end()}, {y0.begin(), y0.end()}, {x0.begin(), x0.end()}};
  PairVisitor visitor(model, abar, scale.epsilon, state);
  detail::walk(noise, 0.0, scale.T, visitor);
  return state;
}

FirstVariationResult simulate_first_variation(const DriftField& abar,
                                              const CoefficientModel& model, ConstVec x0,
                                              ConstVec direction, double T, double dt,
                                              const RandomPlan& plan,
                                              const VariationOptions& options) {
  const Dims& d = model.dims();
  require_dims(x0, d.n, "slow state");
  require_dims(direction, d.n, "variation direction");
  if (std::all_of(direction.begin(), direction.end(), [](double e) { return e == 0.0; })) {
    throw InvalidInputError("simulate_first_variation: direction must be nonzero");
  }
  if (!(options.fd_step > 0.0)) {
    throw InvalidInputError("simulate_first_variation: fd_step must be > 0");
  }
  base_step_count(T, dt);
  const JumpSchedule slow = sample_jump_times(model.lambda1(), T, plan, NoiseRole::kSlowJumps);
  const auto noise = detail::make_walk_noise(plan, &slow, nullptr, d.d1, d.d2, dt, T);

  FirstVariationResult state{{x0.begin(), x0.end()}, {direction.begin(), direction.end()}};
  VariationVisitor visitor(abar, model, options.fd_step, state);
  detail::walk(noise, 0.0, T, visitor);
  return state;
}

}  // namespace slowfast
