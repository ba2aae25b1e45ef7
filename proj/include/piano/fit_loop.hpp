#pragma once

#include "piano/core.hpp"

#include <chrono>
#include <functional>
#include <string>

namespace piano {

/// Called after every recorded iteration (including iteration 0). Returning
/// true stops the fit early.
using FitObserver = std::function<bool(const TraceRecord&)>;

namespace detail {

/// Shared outer loop: record iteration 0, then step until the relative
/// objective change drops to rel_tol or the iteration budget runs out.
/// `step` maps W_k to W_{k+1}; `objective` scores an iterate.
template <typename Step, typename Objective>
FitResult run_outer_loop(WeightMatrix W, const FitConfig& config, Step&& step,
                         Objective&& objective, const FitObserver& observer) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(clock::now() - start).count();
  };

  FitResult result;
  double prev = objective(W);
  if (!std::isfinite(prev)) throw Error("non-finite objective at the initial point");
  result.trace.push_back({0, prev, elapsed_ms(), W.nnz()});
  if (observer && observer(result.trace.back())) {
    result.stopped_early = true;
    result.weights = std::move(W);
    return result;
  }

  for (int k = 1; k <= config.max_outer_iters; ++k) {
    W = step(W);
    const double cur = objective(W);
    if (!std::isfinite(cur))
      throw Error("non-finite objective at iteration " + std::to_string(k));
    result.trace.push_back({k, cur, elapsed_ms(), W.nnz()});
    if (observer && observer(result.trace.back())) {
      result.stopped_early = true;
      break;
    }
    if (relative_change(prev, cur) <= config.rel_tol) {
      result.converged = true;
      break;
    }
    prev = cur;
  }
  result.weights = std::move(W);
  return result;
}

}  // namespace detail
}  // namespace piano
