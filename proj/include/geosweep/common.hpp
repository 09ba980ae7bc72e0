#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace geosweep {

// Binary formats (PFM, PLY, kernel files) are written in native byte order
// and declared little-endian; refuse to build elsewhere.
static_assert(std::endian::native == std::endian::little,
              "geosweep binary I/O assumes a little-endian host");

/// Invalid configuration, bad arguments, violated preconditions.
/// The CLI maps this family to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Unreadable files, inconsistent data, failed runtime checks.
/// The CLI maps this family to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Runs fn(i) for i in [begin, end), splitting the range over a small
/// thread pool. Every iteration must write to disjoint state; results are
/// then identical to the sequential order regardless of scheduling.
template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const int num_threads = static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(n)));
  if (num_threads <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(num_threads);
  const int chunk = (n + num_threads - 1) / num_threads;
  for (int t = 0; t < num_threads; ++t) {
    const int lo = begin + t * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace geosweep
