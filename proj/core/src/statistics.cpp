#include "slowfast/statistics.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "slowfast/error.hpp"

namespace slowfast {

namespace {

std::atomic<std::size_t> g_threads{0};
thread_local int t_parallel_depth = 0;

struct DepthGuard {
  DepthGuard() { ++t_parallel_depth; }
  ~DepthGuard() { --t_parallel_depth; }
};

std::size_t env_threads() {
  if (const char* env = std::getenv("SLOWFAST_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return 0;
}

}  // namespace

std::size_t thread_count() {
  if (const std::size_t t = g_threads.load(); t > 0) return t;
  if (const std::size_t t = env_threads(); t > 0) return t;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void set_thread_count(std::size_t threads) { g_threads.store(threads); }

void parallel_blocks(std::size_t n, std::size_t block_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  if (block_size == 0) throw InvalidInputError("parallel_blocks: block_size must be > 0");
  const std::size_t blocks = (n + block_size - 1) / block_size;
  if (blocks == 0) return;
  // Nested loops (e.g. an estimated drift queried inside a sample loop) run
  // on the calling worker.
  const std::size_t workers = t_parallel_depth > 0 ? 1 : std::min(thread_count(), blocks);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<bool> stop{false};

  auto run = [&] {
    DepthGuard guard;
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks) return;
      const std::size_t begin = b * block_size;
      const std::size_t end = std::min(n, begin + block_size);
      try {
        body(b, begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop.store(true);
      }
    }
  };

  if (workers <= 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<RunningStats> parallel_sample_stats(
    std::size_t n, std::size_t width,
    const std::function<void(std::size_t, std::span<double>)>& sample, std::size_t block_size) {
  const std::size_t blocks = (n + block_size - 1) / block_size;
  std::vector<std::vector<RunningStats>> per_block(blocks, std::vector<RunningStats>(width));
  parallel_blocks(n, block_size, [&](std::size_t b, std::size_t begin, std::size_t end) {
    std::vector<double> values(width);
    auto& stats = per_block[b];
    for (std::size_t i = begin; i < end; ++i) {
      try {
        sample(i, values);
      } catch (const BlowUpError& e) {
        throw e.with_sample(i);
      }
      for (std::size_t j = 0; j < width; ++j) stats[j].push(values[j]);
    }
  });
  std::vector<RunningStats> total(width);
  for (const auto& block : per_block) {
    for (std::size_t j = 0; j < width; ++j) total[j].merge(block[j]);
  }
  return total;
}

}  // namespace slowfast
