#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hypercircle {

using Index = int;
using Vector = Eigen::VectorXd;

/// A numerical procedure did not reach its tolerance (CG, power iteration).
class NumericFailure : public std::runtime_error {
public:
  NumericFailure(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// A discrete identity that must hold exactly (up to rounding) was violated.
/// This always points at a bug upstream, never at bad user input.
class IntegrityFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Number of workers for a requested thread count; 0 means "auto".
inline unsigned resolve_threads(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs fn(i) for i in [0, n) on a static partition of `threads` workers.
/// Callers write results into per-index slots, so the outcome never depends
/// on the worker count or scheduling.
template <typename Fn>
void parallel_for(Index n, unsigned threads, Fn&& fn) {
  if (n <= 0) return;
  const unsigned workers = std::min<unsigned>(std::max(1u, threads), static_cast<unsigned>(n));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  const Index chunk = (n + static_cast<Index>(workers) - 1) / static_cast<Index>(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const Index begin = static_cast<Index>(w) * chunk;
    const Index end = std::min(n, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        for (Index i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace hypercircle
