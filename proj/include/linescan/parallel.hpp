#pragma once

#include <cstdint>

#include <omp.h>

namespace linescan {

/// Number of workers used by parallel_for. Defaults to default_worker_count().
int worker_count();

/// Sets the worker count for subsequent calls (clamped to >= 1).
void set_worker_count(int workers);

/// LINESCAN_WORKERS if set and valid, otherwise the number of logical cores.
int default_worker_count();

/// Runs body(k) for k in [0, count). Iterations must write disjoint memory;
/// results are then independent of the worker count.
template <typename Body>
void parallel_for(std::int64_t count, Body&& body) {
  const int workers = worker_count();
  if (workers <= 1 || count <= 1 || omp_in_parallel()) {
    for (std::int64_t k = 0; k < count; ++k) body(k);
    return;
  }
#pragma omp parallel for num_threads(workers) schedule(static)
  for (std::int64_t k = 0; k < count; ++k) body(k);
}

/// RAII override of the worker count.
class ScopedWorkers {
 public:
  explicit ScopedWorkers(int workers) : previous_(worker_count()) { set_worker_count(workers); }
  ~ScopedWorkers() { set_worker_count(previous_); }
  ScopedWorkers(const ScopedWorkers&) = delete;
  ScopedWorkers& operator=(const ScopedWorkers&) = delete;

 private:
  int previous_;
};

}  // namespace linescan
