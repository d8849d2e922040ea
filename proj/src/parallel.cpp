#include "linescan/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <thread>

namespace linescan {

namespace {

std::atomic<int>& worker_slot() {
  static std::atomic<int> workers{default_worker_count()};
  return workers;
}

}  // namespace

int default_worker_count() {
  if (const char* env = std::getenv("LINESCAN_WORKERS")) {
    int value = 0;
    const char* end = env + std::strlen(env);
    auto [ptr, ec] = std::from_chars(env, end, value);
    if (ec == std::errc() && ptr == end && value >= 1) return value;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int worker_count() { return worker_slot().load(std::memory_order_relaxed); }

void set_worker_count(int workers) {
  worker_slot().store(std::max(1, workers), std::memory_order_relaxed);
  omp_set_max_active_levels(1);
}

}  // namespace linescan
