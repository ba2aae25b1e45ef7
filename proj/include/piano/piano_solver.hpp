#pragma once

// Element-parallel majorization-minimization for multinomial logistic
// regression.
//
// At W_k the log-sum-exp term is majorized by its tangent in z = sum_i
// exp(w_i^T x_j), and each exp(w_i^T x_j) by a uniform 1/d mixture of
// per-coordinate exponentials. The resulting surrogate
//
//   g(W | W_k) = -sum_il w_il v_il
//                + sum_j sum_i sum_l (a_j / d) exp(d x_jl (w_il - w_il^k) + s_ji)
//
// with a_j = 1 / sum_i exp(s_ji), s_ji = (w_i^k)^T x_j and v_i = sum_j y_ji x_j
// is separable, so every w_il is updated independently from the W_k snapshot.

#include "piano/core.hpp"
#include "piano/fit_loop.hpp"
#include "piano/parallel.hpp"
#include "piano/scalar_solver.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

namespace piano {

/// v = Y^T X (m x d); independent of the weights.
inline Matrix class_moments(const Dataset& data) {
  Matrix v = Matrix::Zero(data.classes(), data.dims());
  for (Index j = 0; j < data.samples(); ++j) {
    for (Index i = 0; i < data.classes(); ++i) {
      if (data.labels(j, i) != 0.0) v.row(i) += data.labels(j, i) * data.features.row(j);
    }
  }
  return v;
}

struct SurrogateContext {
  Vector log_a;   // log a_j = -logsumexp_i s_ji
  Matrix scores;  // n x m, s_ji
  std::shared_ptr<const Matrix> moments;  // m x d, v_il
};

inline SurrogateContext build_context(const WeightMatrix& Wk, const Dataset& data,
                                      std::shared_ptr<const Matrix> moments, int threads = 1) {
  check_compatible(Wk, data);
  require_dims(moments && moments->rows() == data.classes() && moments->cols() == data.dims(),
               "moment matrix must be m x d");
  const Index n = data.samples();
  const Index m = data.classes();
  const Index d = data.dims();
  SurrogateContext ctx;
  ctx.scores.resize(n, m);
  ctx.log_a.resize(n);
  ctx.moments = std::move(moments);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t begin, std::size_t end) {
    for (auto jj = begin; jj < end; ++jj) {
      const auto j = static_cast<Index>(jj);
      for (Index i = 0; i < m; ++i) {
        double acc = 0.0;
        for (Index l = 0; l < d; ++l) acc += Wk(i, l) * data.features(j, l);
        ctx.scores(j, i) = acc;
      }
      ctx.log_a(j) = -log_sum_exp(ctx.scores.row(j));
    }
  });
  return ctx;
}

inline SurrogateContext build_context(const WeightMatrix& Wk, const Dataset& data, int threads = 1) {
  return build_context(Wk, data, std::make_shared<const Matrix>(class_moments(data)), threads);
}

namespace detail {

inline void fill_element_subproblem(const SurrogateContext& ctx, const WeightMatrix& Wk,
                                    const Dataset& data, Index i, Index l, ScalarExpSum& out) {
  const Index n = data.samples();
  const double d = static_cast<double>(data.dims());
  const double log_d = std::log(d);
  const double w_k = Wk(i, l);
  out.clear();
  out.v = (*ctx.moments)(i, l);
  out.terms.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const double x = data.features(j, l);
    if (x == 0.0) continue;
    const double slope = d * x;
    out.add_term(ctx.log_a(j) - log_d + ctx.scores(j, i) - slope * w_k, slope);
  }
}

}  // namespace detail

/// The one-dimensional surrogate in w_il. Samples with x_jl = 0 only add a
/// constant and are left out of the terms.
inline ScalarExpSum element_subproblem(const SurrogateContext& ctx, const WeightMatrix& Wk,
                                       const Dataset& data, Index i, Index l) {
  if (i < 0 || i >= data.classes() || l < 0 || l >= data.dims())
    throw Error("element_subproblem: index out of range");
  ScalarExpSum p;
  detail::fill_element_subproblem(ctx, Wk, data, i, l, p);
  return p;
}

/// g(W | W_k) exactly as the separable surrogate is written, including the
/// constant contributions of zero features. It sits above l_MLR by
/// surrogate_offset(ctx) at the tangent point.
inline double surrogate_value(const SurrogateContext& ctx, const WeightMatrix& Wk,
                              const Dataset& data, const WeightMatrix& W) {
  check_compatible(Wk, data);
  check_compatible(W, data);
  const Index n = data.samples();
  const Index m = data.classes();
  const Index d = data.dims();
  const double dd = static_cast<double>(d);
  const double log_d = std::log(dd);
  double linear = 0.0;
  for (Index i = 0; i < m; ++i)
    for (Index l = 0; l < d; ++l) linear -= W(i, l) * (*ctx.moments)(i, l);
  double exps = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) {
      for (Index l = 0; l < d; ++l) {
        const double x = data.features(j, l);
        exps += std::exp(ctx.log_a(j) - log_d + dd * x * (W(i, l) - Wk(i, l)) + ctx.scores(j, i));
      }
    }
  }
  return linear + exps;
}

/// g(W_k | W_k) - l_MLR(W_k) = n - sum_j log(1 / a_j), the constant dropped by
/// the tangent bound on log.
inline double surrogate_offset(const SurrogateContext& ctx) {
  return static_cast<double>(ctx.log_a.size()) + ctx.log_a.sum();
}

namespace detail {

enum class ElementRule { smooth, l1 };

/// Per-element minimizers over the W_k snapshot. `values`, when given, gets
/// the element objective at its minimizer and at zero.
inline WeightMatrix solve_all_elements(const WeightMatrix& Wk, const Dataset& data,
                                       const SurrogateContext& ctx, const FitConfig& config,
                                       ElementRule rule, std::vector<double>* at_min = nullptr,
                                       std::vector<double>* at_zero = nullptr) {
  const Index m = data.classes();
  const Index d = data.dims();
  const auto total = static_cast<std::size_t>(m * d);
  const ScalarOptions opt = ScalarOptions::from(config);
  WeightMatrix next(m, d);
  if (at_min) at_min->assign(total, 0.0);
  if (at_zero) at_zero->assign(total, 0.0);

  parallel_for(total, config.thread_count, [&](std::size_t begin, std::size_t end) {
    ScalarExpSum p;
    for (auto k = begin; k < end; ++k) {
      const auto i = static_cast<Index>(k) / d;
      const auto l = static_cast<Index>(k) % d;
      fill_element_subproblem(ctx, Wk, data, i, l, p);
      double w;
      if (rule == ElementRule::l1) {
        p.lambda = config.lambda;
        w = solve_scalar_l1(p, opt);
      } else if (p.terms.empty() && p.v == 0.0) {
        w = Wk(i, l);  // constant surrogate: keep the incumbent
      } else {
        w = solve_scalar(p, opt);
      }
      next(i, l) = w;
      if (at_min) (*at_min)[k] = scalar_value(p, w);
      if (at_zero) (*at_zero)[k] = scalar_value(p, 0.0);
    }
  });
  return next;
}

}  // namespace detail

/// One Jacobi sweep: every element minimizes its own surrogate using only
/// W_k and ctx. Dispatches on config.reg (none or l1; l0 goes through
/// piano_iterate_l0).
inline WeightMatrix piano_iterate(const WeightMatrix& Wk, const Dataset& data,
                                  const SurrogateContext& ctx, const FitConfig& config) {
  check_compatible(Wk, data);
  const auto rule =
      config.reg == Regularization::l1 ? detail::ElementRule::l1 : detail::ElementRule::smooth;
  return detail::solve_all_elements(Wk, data, ctx, config, rule);
}

/// Order in which elements are kept by the l0 step; ties go to the lower
/// class-major index.
inline std::vector<std::size_t> l0_keep_order(const std::vector<double>& at_min,
                                              const std::vector<double>& at_zero, L0Rank rank) {
  std::vector<std::size_t> order(at_min.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (rank == L0Rank::value) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return at_min[a] < at_min[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return at_zero[a] - at_min[a] > at_zero[b] - at_min[b];
    });
  }
  return order;
}

/// Unconstrained element minimizers followed by the hard threshold that keeps
/// the first beta ranked elements.
inline WeightMatrix piano_iterate_l0(const WeightMatrix& Wk, const Dataset& data,
                                     const SurrogateContext& ctx, const FitConfig& config) {
  check_compatible(Wk, data);
  std::vector<double> at_min;
  std::vector<double> at_zero;
  WeightMatrix next = detail::solve_all_elements(Wk, data, ctx, config,
                                                 detail::ElementRule::smooth, &at_min, &at_zero);
  const auto order = l0_keep_order(at_min, at_zero, config.l0_rank);
  const Index d = data.dims();
  for (std::size_t r = config.beta; r < order.size(); ++r) {
    const auto k = static_cast<Index>(order[r]);
    next(k / d, k % d) = 0.0;
  }
  return next;
}

namespace detail {

template <typename Iterate, typename Objective>
FitResult piano_outer(const Dataset& data, WeightMatrix W0, const FitConfig& config,
                      Iterate&& iterate, Objective&& objective, const FitObserver& observer) {
  data.validate();
  check_compatible(W0, data);
  config.validate(W0.size());
  if (!W0.all_finite()) throw Error("initial weights must be finite");
  const auto moments = std::make_shared<const Matrix>(class_moments(data));
  auto step = [&](const WeightMatrix& Wk) {
    const SurrogateContext ctx = build_context(Wk, data, moments, config.thread_count);
    return iterate(Wk, data, ctx, config);
  };
  return run_outer_loop(std::move(W0), config, step, objective, observer);
}

}  // namespace detail

/// Unregularized fit; stops on relative change of l_MLR.
inline FitResult piano_fit(const Dataset& data, WeightMatrix W0, FitConfig config,
                           const FitObserver& observer = {}) {
  config.reg = Regularization::none;
  return detail::piano_outer(
      data, std::move(W0), config, piano_iterate,
      [&](const WeightMatrix& W) { return mlr_objective(W, data); }, observer);
}

/// l1-penalized fit; the trace and stopping rule use l_MLR + lambda ||w||_1.
inline FitResult piano_fit_l1(const Dataset& data, WeightMatrix W0, FitConfig config,
                              const FitObserver& observer = {}) {
  config.reg = Regularization::l1;
  return detail::piano_outer(
      data, std::move(W0), config, piano_iterate,
      [&](const WeightMatrix& W) { return penalized_objective(W, data, config); }, observer);
}

/// Cardinality-constrained fit (||w||_0 <= beta); the trace reports plain
/// l_MLR and the stopping rule uses its relative change.
inline FitResult piano_fit_l0(const Dataset& data, WeightMatrix W0, FitConfig config,
                              const FitObserver& observer = {}) {
  config.reg = Regularization::l0;
  return detail::piano_outer(
      data, std::move(W0), config, piano_iterate_l0,
      [&](const WeightMatrix& W) { return mlr_objective(W, data); }, observer);
}

/// Dispatches on config.reg.
inline FitResult piano_fit_any(const Dataset& data, WeightMatrix W0, const FitConfig& config,
                               const FitObserver& observer = {}) {
  switch (config.reg) {
    case Regularization::l1:
      return piano_fit_l1(data, std::move(W0), config, observer);
    case Regularization::l0:
      return piano_fit_l0(data, std::move(W0), config, observer);
    case Regularization::none:
      break;
  }
  return piano_fit(data, std::move(W0), config, observer);
}

}  // namespace piano
