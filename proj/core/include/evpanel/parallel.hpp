#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace evpanel {

// Default worker count: EVPANEL_THREADS if set, else hardware concurrency.
inline int default_threads() {
  if (const char* env = std::getenv("EVPANEL_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline int resolve_threads(int requested) {
  return requested >= 1 ? requested : default_threads();
}

// Runs fn(i) for i in [0, n). Work items must write only to their own output
// slots; results are then independent of the thread count and schedule.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Variant passing the worker index alongside the item index so callers can
// keep one scratch buffer per worker. Worker w handles items w, w+workers, ...
inline void parallel_for_indexed(int n, int threads,
                                 const std::function<void(int, int)>& fn) {
  threads = resolve_threads(threads);
  const int workers = std::max(1, std::min(threads, n));
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) fn(w, i);
    });
  }
  for (auto& t : pool) t.join();
}

// Pairwise tree sum: a fixed reduction order keeps totals bitwise stable no
// matter how the per-element values were produced.
inline double pairwise_sum(const double* v, int n) {
  if (n <= 8) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const int half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v.data(), static_cast<int>(v.size()));
}

}  // namespace evpanel
