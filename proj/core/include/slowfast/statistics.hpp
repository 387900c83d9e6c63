#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace slowfast {

/// Monte Carlo estimate of a scalar functional.
struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(n)
  std::size_t n = 0;
};

/// Streaming mean/variance (Welford). Identical inputs give exactly zero
/// spread, and merging in a fixed order is reproducible bit for bit.
class RunningStats {
 public:
  void push(double v) noexcept {
    ++count_;
    const double delta = v - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (v - mean_);
  }

  void merge(const RunningStats& other) noexcept {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double total = static_cast<double>(count_ + other.count_);
    const double delta = other.mean_ - mean_;
    mean_ += delta * (static_cast<double>(other.count_) / total);
    m2_ += other.m2_ + delta * delta * (static_cast<double>(count_) *
                                        static_cast<double>(other.count_) / total);
    count_ += other.count_;
  }

  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }

  MCEstimate estimate() const noexcept {
    return {mean_, count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0,
            count_};
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Worker count for sample-parallel loops. Resolution order: explicit
/// set_thread_count(), the SLOWFAST_THREADS environment variable, then
/// std::thread::hardware_concurrency().
std::size_t thread_count();
void set_thread_count(std::size_t threads);

/// Fixed partition of [0, n) into blocks of `block_size`; `body(block_index,
/// begin, end)` runs for every block, concurrently across workers. The
/// partition does not depend on the worker count, so per-block results merged
/// in block order are identical for any number of threads. The first
/// exception thrown by a body is rethrown after all workers stop.
void parallel_blocks(std::size_t n, std::size_t block_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

inline constexpr std::size_t kDefaultBlockSize = 1024;

/// Runs `sample(i, values)` for i in [0, n) where each call writes `width`
/// statistics; returns one RunningStats per statistic, merged in block
/// order.
std::vector<RunningStats> parallel_sample_stats(
    std::size_t n, std::size_t width,
    const std::function<void(std::size_t, std::span<double>)>& sample,
    std::size_t block_size = kDefaultBlockSize);

/// Combined standard error of a difference of independent estimates.
inline double combined_std_error(const MCEstimate& a, const MCEstimate& b) {
  return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
}

}  // namespace slowfast
