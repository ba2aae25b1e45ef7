#pragma once

// One-dimensional subproblems of the form
//
//   f(w) = -w v + sum_j r_j exp(slope_j w)  (+ lambda |w|)
//
// with r_j > 0 held in log space. f' is nondecreasing, so the root of f' is
// bracketed by walking away from w = 0 in the direction opposite the sign
// of f'(0) and then bisected.

#include "piano/core.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace piano {

struct ExpTerm {
  double log_r = 0.0;
  double slope = 0.0;
  double log_abs_slope = 0.0;  // cached log|slope|
};

struct ScalarExpSum {
  double v = 0.0;
  std::vector<ExpTerm> terms;
  double lambda = 0.0;

  void add_term(double log_r, double slope) {
    terms.push_back({log_r, slope, std::log(std::abs(slope))});
  }

  void clear() {
    v = 0.0;
    lambda = 0.0;
    terms.clear();
  }
};

struct ScalarOptions {
  double tol = 1e-8;      // bisection stops once the bracket is narrower
  double growth = 2.0;    // geometric bracket expansion factor
  double cap = 1e3;       // largest |w| probed before giving up

  static ScalarOptions from(const FitConfig& c) {
    return {c.bisection_tol, c.bracket_growth, c.weight_cap};
  }
};

struct Bracket {
  double a = 0.0;
  double b = 0.0;
};

/// Derivative of the smooth part, -v + sum_j r_j slope_j exp(slope_j w).
/// Each term is evaluated as sign(slope) exp(log r + log|slope| + slope w),
/// which saturates to +-inf instead of overflowing an intermediate.
inline double scalar_grad(const ScalarExpSum& p, double w) {
  double g = -p.v;
  for (const auto& t : p.terms) {
    const double e = std::exp(t.log_r + t.log_abs_slope + t.slope * w);
    g += t.slope > 0.0 ? e : -e;
  }
  return g;
}

/// f(w), including lambda |w|.
inline double scalar_value(const ScalarExpSum& p, double w) {
  double f = -w * p.v;
  for (const auto& t : p.terms) f += std::exp(t.log_r + t.slope * w);
  return f + p.lambda * std::abs(w);
}

/// Smooth-case bracket [a, b] with a = 0. Returns nullopt when no sign
/// change is found with |b| <= cap.
inline std::optional<Bracket> bracket_root(const ScalarExpSum& p, const ScalarOptions& opt = {}) {
  const double g0 = scalar_grad(p, 0.0);
  if (g0 == 0.0) return Bracket{0.0, 0.0};
  const double dir = g0 > 0.0 ? -1.0 : 1.0;
  double mag = 1.0;
  while (true) {
    const double clipped = std::min(mag, opt.cap);
    const double gb = scalar_grad(p, dir * clipped);
    if ((g0 > 0.0 && gb <= 0.0) || (g0 < 0.0 && gb >= 0.0)) return Bracket{0.0, dir * clipped};
    if (clipped >= opt.cap) return std::nullopt;
    mag *= opt.growth;
  }
}

/// Bisection on f' over [a, b] (either order) until the bracket is narrower
/// than tol; returns the final midpoint.
inline double bisect(const ScalarExpSum& p, double a, double b, double tol) {
  if (a == b) return a;
  double lo = std::min(a, b);
  double hi = std::max(a, b);
  const double glo = scalar_grad(p, lo);
  const double ghi = scalar_grad(p, hi);
  if (glo > 0.0 || ghi < 0.0 || std::isnan(glo) || std::isnan(ghi))
    throw ContractError("bisect: derivative does not change sign on the bracket");
  while (hi - lo >= tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (scalar_grad(p, mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Minimizer of the smooth problem. When the infimum is approached only as
/// |w| -> inf the result is clamped to +-cap.
inline double solve_scalar(const ScalarExpSum& p, const ScalarOptions& opt = {}) {
  const double g0 = scalar_grad(p, 0.0);
  if (g0 == 0.0) return 0.0;
  const auto br = bracket_root(p, opt);
  if (!br) return g0 > 0.0 ? -opt.cap : opt.cap;
  return bisect(p, br->a, br->b, opt.tol);
}

/// Minimizer of the l1-penalized problem (requires lambda > 0). Zero is
/// returned exactly whenever |f'_smooth(0)| <= lambda.
inline double solve_scalar_l1(const ScalarExpSum& p, const ScalarOptions& opt = {}) {
  if (!(p.lambda > 0.0)) throw ContractError("solve_scalar_l1 needs lambda > 0");
  const double h0 = scalar_grad(p, 0.0) / p.lambda;
  if (h0 >= -1.0 && h0 <= 1.0) return 0.0;

  // Fix the subgradient at -1 (root on the negative side) or +1 (positive
  // side) and fold it into the linear coefficient.
  ScalarExpSum shifted = p;
  shifted.lambda = 0.0;
  const double subgrad = h0 > 1.0 ? -1.0 : 1.0;
  shifted.v = p.v - p.lambda * subgrad;
  const auto br = bracket_root(shifted, opt);
  if (!br) return subgrad < 0.0 ? -opt.cap : opt.cap;
  const double w = bisect(shifted, br->a, br->b, opt.tol);
  // The bracket starts at 0 and excludes it as a root, but the midpoint of a
  // tiny final bracket could still round to the wrong side.
  if (subgrad < 0.0) return std::min(w, -std::numeric_limits<double>::denorm_min());
  return std::max(w, std::numeric_limits<double>::denorm_min());
}

}  // namespace piano
