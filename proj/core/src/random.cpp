#include "slowfast/random.hpp"

#include <cmath>
#include <limits>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "slowfast/error.hpp"

namespace slowfast {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline Philox4x32::Counter philox_round(const Philox4x32::Counter& ctr,
                                        const Philox4x32::Key& key) noexcept {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

// 53-bit mantissa from two 32-bit words, shifted to the open interval.
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

// Philox over L independent counters in structure-of-arrays form. The SSE2
// path handles four lanes per vector; both paths are exact integer
// arithmetic and agree bit for bit.
template <std::size_t L>
inline void philox_lanes(std::uint32_t (&x0)[L], std::uint32_t (&x1)[L], std::uint32_t (&x2)[L],
                         std::uint32_t (&x3)[L], Philox4x32::Key key) noexcept {
#if defined(__SSE2__)
  static_assert(L % 4 == 0);
  const __m128i m0 = _mm_set1_epi32(static_cast<int>(kPhiloxM0));
  const __m128i m1 = _mm_set1_epi32(static_cast<int>(kPhiloxM1));
  const __m128i low = _mm_set1_epi64x(0x00000000FFFFFFFFll);
  const __m128i high = _mm_set1_epi64x(static_cast<long long>(0xFFFFFFFF00000000ull));
  for (std::size_t l = 0; l < L; l += 4) {
    auto load = [&](std::uint32_t* p) { return _mm_loadu_si128(reinterpret_cast<__m128i*>(p + l)); };
    __m128i v0 = load(x0), v1 = load(x1), v2 = load(x2), v3 = load(x3);
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
      }
      const __m128i e0 = _mm_mul_epu32(v0, m0);
      const __m128i o0 = _mm_mul_epu32(_mm_srli_epi64(v0, 32), m0);
      const __m128i e1 = _mm_mul_epu32(v2, m1);
      const __m128i o1 = _mm_mul_epu32(_mm_srli_epi64(v2, 32), m1);
      const __m128i lo0 = _mm_or_si128(_mm_and_si128(e0, low), _mm_slli_epi64(o0, 32));
      const __m128i hi0 = _mm_or_si128(_mm_srli_epi64(e0, 32), _mm_and_si128(o0, high));
      const __m128i lo1 = _mm_or_si128(_mm_and_si128(e1, low), _mm_slli_epi64(o1, 32));
      const __m128i hi1 = _mm_or_si128(_mm_srli_epi64(e1, 32), _mm_and_si128(o1, high));
      v0 = _mm_xor_si128(_mm_xor_si128(hi1, v1), _mm_set1_epi32(static_cast<int>(k0)));
      v2 = _mm_xor_si128(_mm_xor_si128(hi0, v3), _mm_set1_epi32(static_cast<int>(k1)));
      v1 = lo1;
      v3 = lo0;
    }
    auto store = [&](std::uint32_t* p, __m128i v) {
      _mm_storeu_si128(reinterpret_cast<__m128i*>(p + l), v);
    };
    store(x0, v0);
    store(x1, v1);
    store(x2, v2);
    store(x3, v3);
  }
#else
  for (std::size_t l = 0; l < L; ++l) {
    const auto out = Philox4x32::apply({x0[l], x1[l], x2[l], x3[l]}, key);
    x0[l] = out[0];
    x1[l] = out[1];
    x2[l] = out[2];
    x3[l] = out[3];
  }
#endif
}

}  // namespace

Philox4x32::Counter Philox4x32::apply(Counter ctr, Key key) noexcept {
  ctr = philox_round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
    ctr = philox_round(ctr, key);
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  // splitmix64 finalizer
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

RandomPlan RandomPlan::for_sample(std::uint64_t index) const noexcept {
  RandomPlan p = *this;
  p.stream_id = mix64(stream_id ^ mix64(index + 0x5851F42D4C957F2Dull));
  return p;
}

RandomPlan RandomPlan::derive(std::uint64_t tag) const noexcept {
  RandomPlan p = *this;
  p.stream_id = mix64(mix64(stream_id) + 0xA0761D6478BD642Full * (tag + 1));
  return p;
}

double inverse_normal_cdf(double p) noexcept {
  if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
  if (!(p < 1.0)) return std::numeric_limits<double>::infinity();

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }

  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
            3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    value = num / den;
  }
  return q < 0.0 ? -value : value;
}

Substream::Substream(const RandomPlan& plan, NoiseRole role) noexcept
    : label_(plan.substream(role)) {
  const std::uint64_t k = mix64(plan.seed ^ mix64(plan.stream_id));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

std::array<double, 2> Substream::uniform_pair(DrawSpace space, std::uint64_t index,
                                              std::uint32_t slot) const noexcept {
  const Philox4x32::Counter ctr{
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
      (static_cast<std::uint32_t>(space) << 24) | (slot & 0x00FFFFFFu), label_};
  const auto out = Philox4x32::apply(ctr, key_);
  return {to_open_unit(out[0], out[1]), to_open_unit(out[2], out[3])};
}

void Substream::normals(DrawSpace space, std::uint64_t index, std::uint32_t slot,
                        std::span<double> out) const noexcept {
  // Slot carries the bridge point in its low 16 bits, coordinate pair above.
  for (std::size_t j = 0; j < out.size(); j += 2) {
    const auto pair_slot = slot | (static_cast<std::uint32_t>(j / 2) << 16);
    const auto u = uniform_pair(space, index, pair_slot);
    out[j] = inverse_normal_cdf(u[0]);
    if (j + 1 < out.size()) out[j + 1] = inverse_normal_cdf(u[1]);
  }
}

void Substream::increment_normals(std::uint64_t first, std::size_t count, std::size_t dim,
                                  std::span<double> out) const noexcept {
  if (count == 0 || dim == 0) return;
  constexpr std::size_t L = 16;
  const std::uint64_t q_begin = first * dim;
  const std::uint64_t q_end = (first + count) * dim;
  const std::uint32_t word2 = static_cast<std::uint32_t>(DrawSpace::kIncrement) << 24;
  std::uint32_t x0[L], x1[L], x2[L], x3[L];
  for (std::uint64_t blk = q_begin >> 1; 2 * blk < q_end; blk += L) {
    for (std::size_t l = 0; l < L; ++l) {
      const std::uint64_t index = blk + l;
      x0[l] = static_cast<std::uint32_t>(index);
      x1[l] = static_cast<std::uint32_t>(index >> 32);
      x2[l] = word2;
      x3[l] = label_;
    }
    philox_lanes(x0, x1, x2, x3, key_);
    for (std::size_t l = 0; l < L; ++l) {
      const std::uint64_t q = 2 * (blk + l);
      if (q >= q_end) break;
      if (q >= q_begin) out[q - q_begin] = inverse_normal_cdf(to_open_unit(x0[l], x1[l]));
      if (q + 1 >= q_begin && q + 1 < q_end) {
        out[q + 1 - q_begin] = inverse_normal_cdf(to_open_unit(x2[l], x3[l]));
      }
    }
  }
}

JumpSchedule sample_jump_times(double rate, double horizon, const RandomPlan& plan,
                               NoiseRole role) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    throw InvalidInputError("sample_jump_times: rate must be finite and >= 0");
  }
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw InvalidInputError("sample_jump_times: horizon must be finite and > 0");
  }
  JumpSchedule schedule{rate, horizon, {}};
  if (rate == 0.0) return schedule;

  schedule.times.reserve(static_cast<std::size_t>(rate * horizon * 1.2) + 8);
  const Substream stream(plan, role);
  double t = 0.0;
  for (std::uint64_t i = 0;; ++i) {
    const double u = stream.uniform_pair(DrawSpace::kInterarrival, i)[0];
    const double next = t - std::log(u) / rate;
    if (next > horizon) break;
    // Interarrivals are strictly positive, but a tiny one can round to zero.
    if (next > t) schedule.times.push_back(next);
    t = next;
  }
  return schedule;
}

std::vector<std::vector<double>> brownian_increments(std::span<const double> steps,
                                                     std::size_t dim,
                                                     const RandomPlan& plan,
                                                     NoiseRole role) {
  for (double h : steps) {
    if (!(h > 0.0) || !std::isfinite(h)) {
      throw InvalidInputError("brownian_increments: step lengths must be finite and > 0");
    }
  }
  const Substream stream(plan, role);
  std::vector<double> z(steps.size() * dim);
  stream.increment_normals(0, steps.size(), dim, z);
  std::vector<std::vector<double>> increments(steps.size(), std::vector<double>(dim));
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double scale = std::sqrt(steps[k]);
    for (std::size_t j = 0; j < dim; ++j) increments[k][j] = z[k * dim + j] * scale;
  }
  return increments;
}

}  // namespace slowfast
