#pragma once

// Event loop shared by every integrator. Walks base steps of length dt,
// splitting each at interior jump times, and hands the visitor the Brownian
// increments of every slow / fast sub-interval.
//
// Visitor requirements:
//   static constexpr bool kSlow;   // consumes B increments and P jumps
//   static constexpr bool kFast;   // consumes W increments and N jumps
//   void begin_slow();
//   void end_slow(double len, ConstVec dB, bool p_jump, double t);
//   void fast(double len, ConstVec dW, bool n_jump, double t);
//   void node(double t, std::uint8_t flags);   // after all updates at t

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "slowfast/error.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/random.hpp"

namespace slowfast::detail {

struct WalkNoise {
  const JumpSchedule* slow_jumps = nullptr;
  const JumpSchedule* fast_jumps = nullptr;
  Substream slow_bm;
  Substream fast_bm;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  double dt = 0.0;
  double horizon = 0.0;
};

inline WalkNoise make_walk_noise(const RandomPlan& plan, const JumpSchedule* slow_jumps,
                                 const JumpSchedule* fast_jumps, std::size_t d1,
                                 std::size_t d2, double dt, double horizon) {
  return {slow_jumps,
          fast_jumps,
          Substream(plan, NoiseRole::kSlowBrownian),
          Substream(plan, NoiseRole::kFastBrownian),
          d1,
          d2,
          dt,
          horizon};
}

/// Base-step index of grid time t; throws unless t sits on the grid.
inline std::size_t grid_index(double t, double dt, double horizon) {
  const std::size_t steps = base_step_count(horizon, dt);
  if (std::abs(t - horizon) <= 1e-12 * std::max(1.0, horizon)) return steps;
  const double r = t / dt;
  const double k = std::round(r);
  if (std::abs(r - k) > 1e-9 * std::max(1.0, k) || k < 0 || k > static_cast<double>(steps)) {
    throw InvalidInputError("integration window endpoints must be base grid nodes");
  }
  return static_cast<std::size_t>(k);
}

// Splits the remaining increment `rem` over remaining length `rem_len` at a
// sub-interval of length `len`: conditional law N(rem*len/rem_len,
// len*(rem_len-len)/rem_len).
inline void bridge_split(std::vector<double>& rem, double rem_len, double len,
                         const Substream& stream, std::uint64_t step, std::uint32_t point,
                         std::vector<double>& out, std::vector<double>& z) {
  stream.normals(DrawSpace::kBridge, step, point, z);
  const double w = len / rem_len;
  const double sd = std::sqrt(std::max(0.0, len * (rem_len - len) / rem_len));
  for (std::size_t i = 0; i < rem.size(); ++i) {
    out[i] = rem[i] * w + sd * z[i];
    rem[i] -= out[i];
  }
}

template <class Visitor>
void walk(const WalkNoise& noise, double t0, double t1, Visitor& v) {
  constexpr bool kSlow = Visitor::kSlow;
  constexpr bool kFast = Visitor::kFast;
  const double dt = noise.dt;
  const double horizon = noise.horizon;
  const std::size_t k_begin = grid_index(t0, dt, horizon);
  const std::size_t k_end = grid_index(t1, dt, horizon);
  const std::size_t steps = base_step_count(horizon, dt);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  static const std::vector<double> kEmpty;
  const std::vector<double>& pj =
      (kSlow || kFast) && noise.slow_jumps ? noise.slow_jumps->times : kEmpty;
  const std::vector<double>& nj = kFast && noise.fast_jumps ? noise.fast_jumps->times : kEmpty;

  const double t_begin = static_cast<double>(k_begin) * dt;
  std::size_t ip = static_cast<std::size_t>(std::upper_bound(pj.begin(), pj.end(), t_begin) -
                                            pj.begin());
  std::size_t in = static_cast<std::size_t>(std::upper_bound(nj.begin(), nj.end(), t_begin) -
                                            nj.begin());

  const std::size_t d1 = kSlow ? noise.d1 : 0;
  const std::size_t d2 = kFast ? noise.d2 : 0;
  std::vector<double> rem_b(d1), rem_w(d2);
  std::vector<double> inc_b(d1), inc_w(d2);
  std::vector<double> zb(d1), zw(d2);

  // Base increments are drawn kChunk steps at a time.
  constexpr std::size_t kChunk = 256;
  std::vector<double> chunk_b(kChunk * d1), chunk_w(kChunk * d2);
  std::size_t chunk_start = k_begin;

  const double root_dt = std::sqrt(dt);
  for (std::size_t k = k_begin; k < k_end; ++k) {
    const double ta = static_cast<double>(k) * dt;
    const double tb = (k + 1 == steps) ? horizon : static_cast<double>(k + 1) * dt;
    const double len = tb - ta;
    const double root = (k + 1 == steps) ? std::sqrt(len) : root_dt;

    if ((k - k_begin) % kChunk == 0) {
      chunk_start = k;
      const std::size_t count = std::min(kChunk, k_end - k);
      if constexpr (kSlow) noise.slow_bm.increment_normals(k, count, d1, chunk_b);
      if constexpr (kFast) noise.fast_bm.increment_normals(k, count, d2, chunk_w);
    }
    const std::size_t offset = k - chunk_start;
    if constexpr (kSlow) {
      for (std::size_t j = 0; j < d1; ++j) rem_b[j] = chunk_b[offset * d1 + j] * root;
    }
    if constexpr (kFast) {
      for (std::size_t j = 0; j < d2; ++j) rem_w[j] = chunk_w[offset * d2 + j] * root;
    }

    double slow_start = ta;
    double fast_start = ta;
    std::uint32_t qb = 0;
    std::uint32_t qw = 0;
    if constexpr (kSlow) v.begin_slow();

    for (;;) {
      const double tp = ip < pj.size() && pj[ip] <= tb ? pj[ip] : kInf;
      const double tn = in < nj.size() && nj[in] <= tb ? nj[in] : kInf;
      const double tau = std::min(tp, tn);
      if (tau == kInf) break;
      const bool is_p = tp == tau;
      const bool is_n = tn == tau;

      if constexpr (kFast) {
        const double l = tau - fast_start;
        if (tau < tb) {
          bridge_split(rem_w, tb - fast_start, l, noise.fast_bm, k, ++qw, inc_w, zw);
          v.fast(l, inc_w, is_n, tau);
        } else {
          v.fast(l, rem_w, is_n, tau);
        }
        fast_start = tau;
      }
      if (is_p) {
        if constexpr (kSlow) {
          const double l = tau - slow_start;
          if (tau < tb) {
            bridge_split(rem_b, tb - slow_start, l, noise.slow_bm, k, ++qb, inc_b, zb);
            v.end_slow(l, inc_b, true, tau);
          } else {
            v.end_slow(l, rem_b, true, tau);
          }
          slow_start = tau;
        }
        ++ip;
      }
      if (is_n) ++in;
      v.node(tau, static_cast<std::uint8_t>((is_p ? kSlowJump : 0) | (is_n ? kFastJump : 0)));
      if constexpr (kSlow) {
        if (is_p && tau < tb) v.begin_slow();
      }
    }

    const bool at_end = (kFast && fast_start < tb) || (kSlow && slow_start < tb);
    if constexpr (kFast) {
      if (fast_start < tb) v.fast(tb - fast_start, rem_w, false, tb);
    }
    if constexpr (kSlow) {
      if (slow_start < tb) v.end_slow(tb - slow_start, rem_b, false, tb);
    }
    if (at_end) v.node(tb, kNoJump);
  }
}

inline void check_finite(ConstVec state, double t) {
  double sq = 0.0;
  for (double e : state) sq += e * e;
  if (!(sq <= kBlowUpThreshold * kBlowUpThreshold)) throw BlowUpError(t);
}

/// out = x + drift*len + b*dB, with b row-major (n x d). Shared by every slow
/// update so coupled and averaged recursions round identically.
inline void euler_slow_update(ConstVec x, ConstVec drift, ConstVec b, ConstVec dB, double len,
                              MutVec out) {
  const std::size_t n = x.size();
  const std::size_t d = dB.size();
  for (std::size_t i = 0; i < n; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < d; ++j) noise += b[i * d + j] * dB[j];
    out[i] = x[i] + drift[i] * len + noise;
  }
}

/// y += f*len*drift_scale + (g dW)*noise_scale, g row-major (m x d).
inline void euler_fast_update(MutVec y, ConstVec f, ConstVec g, ConstVec dW, double len,
                              double drift_scale, double noise_scale) {
  const std::size_t m = y.size();
  const std::size_t d = dW.size();
  for (std::size_t i = 0; i < m; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < d; ++j) noise += g[i * d + j] * dW[j];
    y[i] += f[i] * (len * drift_scale) + noise * noise_scale;
  }
}

// Plain loop: std::copy lowers to a memmove call, costly for tiny states.
inline void copy_into(ConstVec from, MutVec to) {
  for (std::size_t i = 0; i < from.size(); ++i) to[i] = from[i];
}

inline void add_in_place(MutVec y, ConstVec inc) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += inc[i];
}

/// Frozen fast dynamics at fixed x, with optional per-segment observer:
///   observer.segment(t0, t1, y_begin, y_end_left)
///   observer.node(t, y, flags)
template <class Observer>
class FrozenVisitor {
 public:
  static constexpr bool kSlow = false;
  static constexpr bool kFast = true;

  FrozenVisitor(const CoefficientModel& model, ConstVec x, ConstVec y0, Observer& observer)
      : model_(model),
        x_(x.begin(), x.end()),
        y_(y0.begin(), y0.end()),
        y_prev_(y0.size()),
        f_(model.dims().m),
        g_(model.dims().m * model.dims().d2),
        h_(model.dims().m),
        observer_(observer) {}

  void begin_slow() {}
  void end_slow(double, ConstVec, bool, double) {}

  void fast(double len, ConstVec dW, bool jump, double t) {
    copy_into(y_, y_prev_);
    model_.f(x_, y_, f_);
    model_.g(x_, y_, g_);
    euler_fast_update(y_, f_, g_, dW, len, 1.0, 1.0);
    observer_.segment(t - len, t, y_prev_, y_);
    if (jump) {
      model_.h(x_, y_, h_);
      add_in_place(y_, h_);
    }
  }

  void node(double t, std::uint8_t flags) {
    check_finite(y_, t);
    observer_.node(t, y_, flags);
  }

  std::vector<double>& state() { return y_; }

 private:
  const CoefficientModel& model_;
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> y_prev_;
  std::vector<double> f_, g_, h_;
  Observer& observer_;
};

struct NullFrozenObserver {
  void segment(double, double, ConstVec, ConstVec) {}
  void node(double, ConstVec, std::uint8_t) {}
};

}  // namespace slowfast::detail
