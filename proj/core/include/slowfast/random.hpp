#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace slowfast {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
/// pure function of (key, counter), so any draw is addressable directly.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key) noexcept;
};

/// Noise sources of the slow/fast system.
enum class NoiseRole : std::uint8_t {
  kSlowBrownian = 0,  // B
  kFastBrownian = 1,  // W
  kSlowJumps = 2,     // P
  kFastJumps = 3,     // N
};

inline constexpr std::size_t kNoiseRoleCount = 4;

/// Seeded source of reproducible randomness. Identical (seed, stream_id)
/// reproduces bit-identical draws; each role reads its own substream.
struct RandomPlan {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::array<std::uint32_t, kNoiseRoleCount> substream_ids{0, 1, 2, 3};

  std::uint32_t substream(NoiseRole role) const noexcept {
    return substream_ids[static_cast<std::size_t>(role)];
  }

  /// Plan for Monte Carlo sample `index`: same seed and substream labels,
  /// stream id mixed with the index.
  RandomPlan for_sample(std::uint64_t index) const noexcept;

  /// Independent plan for a named purpose (e.g. the second arm of an
  /// uncoupled estimator).
  RandomPlan derive(std::uint64_t tag) const noexcept;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

/// Inverse of the standard normal CDF (Wichura, AS 241; ~1e-16 relative).
double inverse_normal_cdf(double p) noexcept;

/// Address of a draw inside one substream. `space` separates independent
/// families of draws (base increments, bridge points, interarrival times).
enum class DrawSpace : std::uint8_t {
  kIncrement = 0,
  kBridge = 1,
  kInterarrival = 2,
  kUniform = 3,
};

/// Stateless view of one (plan, role) substream.
class Substream {
 public:
  Substream(const RandomPlan& plan, NoiseRole role) noexcept;

  /// Two uniforms in the open interval (0,1), 53-bit resolution.
  std::array<double, 2> uniform_pair(DrawSpace space, std::uint64_t index,
                                     std::uint32_t slot = 0) const noexcept;

  /// Fills `out` with independent standard normals addressed by
  /// (space, index, slot); coordinate j uses pair j/2.
  void normals(DrawSpace space, std::uint64_t index, std::uint32_t slot,
               std::span<double> out) const noexcept;

  /// Standard normals of base-step increments [first, first + count) of a
  /// `dim`-dimensional Brownian motion, written step-major into `out`.
  /// Coordinate j of step k is normal number k*dim + j of the increment
  /// sequence; each Philox block yields two consecutive numbers. Values
  /// depend only on (k, j), never on how the range is chunked.
  void increment_normals(std::uint64_t first, std::size_t count, std::size_t dim,
                         std::span<double> out) const noexcept;

 private:
  Philox4x32::Key key_;
  std::uint32_t label_;
};

/// Sorted jump times of a scalar Poisson process on (0, horizon].
struct JumpSchedule {
  double rate = 0.0;
  double horizon = 0.0;
  std::vector<double> times;
};

/// Exponential-interarrival construction; interarrival i reads draw i of the
/// role's substream.
JumpSchedule sample_jump_times(double rate, double horizon, const RandomPlan& plan,
                               NoiseRole role);

/// k-th increment ~ N(0, steps[k] * I_dim), drawn from the increment
/// sequence exactly as Substream::increment_normals lays it out.
std::vector<std::vector<double>> brownian_increments(std::span<const double> steps,
                                                     std::size_t dim,
                                                     const RandomPlan& plan,
                                                     NoiseRole role);

}  // namespace slowfast
