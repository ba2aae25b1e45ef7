#pragma once

// Reference solvers: Newton (IRLS), the fixed-curvature Bohning bound MM,
// cyclic coordinate MM with soft thresholding for l1, and an exhaustive
// support search for the l0-constrained problem. They are single-threaded
// and sized for cross-checking, not speed.

#include "piano/core.hpp"
#include "piano/fit_loop.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <vector>

namespace piano {

/// sign(a) * max(0, |a| - b)
inline double soft_threshold(double a, double b) {
  const double mag = std::abs(a) - b;
  if (mag <= 0.0) return 0.0;
  return a > 0.0 ? mag : -mag;
}

/// B = 1/2 (I_m - 11^T / m) kron X^T X, ridged by eps = 1e-8 trace(B) / dm.
/// Solves go through the eigendecompositions of both Kronecker factors, so
/// the dm x dm matrix is never formed unless dense() is asked for.
class BohningBound {
 public:
  explicit BohningBound(const Dataset& data)
      : m_(data.classes()), d_(data.dims()) {
    const Matrix scatter = data.features.transpose() * data.features;
    const Matrix class_part =
        0.5 * (Matrix::Identity(m_, m_) - Matrix::Constant(m_, m_, 1.0 / static_cast<double>(m_)));
    scatter_diag_ = scatter.diagonal();
    const double trace_b = class_part.trace() * scatter.trace();
    ridge_ = 1e-8 * trace_b / static_cast<double>(m_ * d_);
    if (!(ridge_ > 0.0)) ridge_ = 1e-8;
    class_part_ = class_part;
    scatter_ = scatter;
    Eigen::SelfAdjointEigenSolver<Matrix> ec(class_part);
    Eigen::SelfAdjointEigenSolver<Matrix> es(scatter);
    if (ec.info() != Eigen::Success || es.info() != Eigen::Success)
      throw Error("Bohning bound: eigendecomposition failed");
    class_vecs_ = ec.eigenvectors();
    class_vals_ = ec.eigenvalues().cwiseMax(0.0);
    scatter_vecs_ = es.eigenvectors();
    scatter_vals_ = es.eigenvalues().cwiseMax(0.0);
  }

  double ridge() const { return ridge_; }
  Index size() const { return m_ * d_; }

  /// (B + eps I)^{-1} r for a class-major flat vector r.
  Vector solve(const Vector& r) const {
    require_dims(r.size() == m_ * d_, "Bohning solve: rhs length != d * m");
    const Matrix R = WeightMatrix::unflatten(r, m_, d_).matrix();  // m x d
    Matrix T = class_vecs_.transpose() * R * scatter_vecs_;
    for (Index a = 0; a < m_; ++a)
      for (Index s = 0; s < d_; ++s) T(a, s) /= class_vals_(a) * scatter_vals_(s) + ridge_;
    return WeightMatrix(class_vecs_ * T * scatter_vecs_.transpose()).flatten();
  }

  /// Ridged diagonal entry for flat index k.
  double diagonal(Index k) const {
    const Index i = k / d_;
    const Index l = k % d_;
    return class_part_(i, i) * scatter_diag_(l) + ridge_;
  }

  /// Unridged B as a dense matrix.
  Matrix dense() const {
    if (m_ * d_ > kDenseLimit) throw Error("Bohning bound: dense size guard exceeded");
    Matrix B(m_ * d_, m_ * d_);
    for (Index i = 0; i < m_; ++i)
      for (Index k = 0; k < m_; ++k) B.block(i * d_, k * d_, d_, d_) = class_part_(i, k) * scatter_;
    return B;
  }

 private:
  Index m_;
  Index d_;
  double ridge_ = 0.0;
  Matrix class_part_;
  Matrix scatter_;
  Vector scatter_diag_;
  Matrix class_vecs_;
  Vector class_vals_;
  Matrix scatter_vecs_;
  Vector scatter_vals_;
};

namespace detail {

inline void require_dense_size(const Dataset& data, const char* who) {
  if (data.dims() * data.classes() > kDenseLimit)
    throw Error(std::string(who) + ": size guard exceeded (d * m > 5000)");
}

}  // namespace detail

/// Newton's method with the exact Hessian, ridged by 1e-8 trace(H) / dm.
/// When `support` is given only those flat coordinates move; the rest keep
/// their W0 values. A step that raises the objective is halved until it
/// does not (at most 50 times).
inline FitResult irls_fit(const Dataset& data, WeightMatrix W0, const FitConfig& config,
                          const std::optional<std::vector<Index>>& support = std::nullopt,
                          const FitObserver& observer = {}) {
  data.validate();
  check_compatible(W0, data);
  detail::require_dense_size(data, "irls_fit");
  FitConfig cfg = config;
  cfg.reg = Regularization::none;
  cfg.validate(W0.size());

  const Index dm = W0.size();
  std::vector<Index> active;
  if (support) {
    active = *support;
  } else {
    active.resize(static_cast<std::size_t>(dm));
    for (Index k = 0; k < dm; ++k) active[static_cast<std::size_t>(k)] = k;
  }
  const auto na = static_cast<Index>(active.size());
  const Index m = data.classes();
  const Index d = data.dims();

  auto objective = [&](const WeightMatrix& W) { return mlr_objective(W, data); };
  auto step = [&](const WeightMatrix& Wk) -> WeightMatrix {
    if (na == 0) return Wk;
    const Vector grad = mlr_gradient(Wk, data);
    const Matrix hess = mlr_hessian(Wk, data);
    Vector g(na);
    Matrix H(na, na);
    for (Index a = 0; a < na; ++a) {
      g(a) = grad(active[static_cast<std::size_t>(a)]);
      for (Index b = 0; b < na; ++b)
        H(a, b) = hess(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);
    }
    if (g.isZero(0.0)) return Wk;
    double ridge = 1e-8 * H.trace() / static_cast<double>(na);
    if (!(ridge > 0.0)) ridge = 1e-12;
    H.diagonal().array() += ridge;
    Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw Error("irls_fit: linear solve failed");
    const Vector delta = ldlt.solve(g);
    if (!delta.allFinite()) throw Error("irls_fit: linear solve produced non-finite step");

    const double base = objective(Wk);
    Vector flat = Wk.flatten();
    double t = 1.0;
    for (int halving = 0; halving <= 50; ++halving, t *= 0.5) {
      Vector trial = flat;
      for (Index a = 0; a < na; ++a) trial(active[static_cast<std::size_t>(a)]) -= t * delta(a);
      WeightMatrix cand = WeightMatrix::unflatten(trial, m, d);
      if (objective(cand) <= base) return cand;
    }
    return Wk;
  };
  return detail::run_outer_loop(std::move(W0), cfg, step, objective, observer);
}

/// w <- w - (B + eps I)^{-1} grad, with B factored once per fit.
inline FitResult bohning_mm_fit(const Dataset& data, WeightMatrix W0, const FitConfig& config,
                                const FitObserver& observer = {}) {
  data.validate();
  check_compatible(W0, data);
  detail::require_dense_size(data, "bohning_mm_fit");
  FitConfig cfg = config;
  cfg.reg = Regularization::none;
  cfg.validate(W0.size());
  const BohningBound bound(data);
  const Index m = data.classes();
  const Index d = data.dims();
  auto objective = [&](const WeightMatrix& W) { return mlr_objective(W, data); };
  auto step = [&](const WeightMatrix& Wk) {
    const Vector grad = mlr_gradient(Wk, data);
    return WeightMatrix::unflatten(Wk.flatten() - bound.solve(grad), m, d);
  };
  return detail::run_outer_loop(std::move(W0), cfg, step, objective, observer);
}

/// Cyclic coordinate MM for l_MLR + lambda ||w||_1. Each coordinate, visited
/// in class-major order, takes soft(w - r/B_ii, lambda/B_ii) with r the
/// partial derivative at the current iterate. One trace record per sweep.
inline FitResult coord_mm_l1_fit(const Dataset& data, WeightMatrix W0, const FitConfig& config,
                                 const FitObserver& observer = {}) {
  data.validate();
  check_compatible(W0, data);
  detail::require_dense_size(data, "coord_mm_l1_fit");
  if (config.reg != Regularization::l1 || config.lambda < 0.0)
    throw Error("coord_mm_l1_fit needs l1 regularization with lambda >= 0");
  FitConfig cfg = config;
  if (cfg.lambda == 0.0) {
    cfg.reg = Regularization::none;  // lambda = 0 is allowed here as plain MM
  }
  cfg.validate(W0.size());
  cfg.reg = Regularization::l1;

  const BohningBound bound(data);
  const Index n = data.samples();
  const Index m = data.classes();
  const Index d = data.dims();
  const double lambda = config.lambda;

  auto objective = [&](const WeightMatrix& W) { return penalized_objective(W, data, cfg); };
  auto sweep = [&](const WeightMatrix& Wk) {
    WeightMatrix W = Wk;
    Matrix scores = score_matrix(W, data);
    Matrix post(n, m);
    for (Index j = 0; j < n; ++j) post.row(j) = softmax_posteriors(scores.row(j)).transpose();
    for (Index i = 0; i < m; ++i) {
      for (Index l = 0; l < d; ++l) {
        double r = 0.0;
        for (Index j = 0; j < n; ++j) r += (post(j, i) - data.labels(j, i)) * data.features(j, l);
        const double b = bound.diagonal(i * d + l);
        const double updated = soft_threshold(W(i, l) - r / b, lambda / b);
        const double delta = updated - W(i, l);
        if (delta == 0.0) continue;
        W(i, l) = updated;
        for (Index j = 0; j < n; ++j) {
          const double x = data.features(j, l);
          if (x == 0.0) continue;
          scores(j, i) += delta * x;
          post.row(j) = softmax_posteriors(scores.row(j)).transpose();
        }
      }
    }
    return W;
  };
  return detail::run_outer_loop(std::move(W0), cfg, sweep, objective, observer);
}

struct L0Solution {
  std::vector<Index> support;  // flat class-major indices
  double objective = 0.0;
  WeightMatrix weights;
};

/// Exhaustive search over every support of size <= beta, each solved by
/// irls_fit from zero restricted to that support. Guarded to dm <= 12 and
/// beta <= 4.
inline L0Solution l0_brute_force(const Dataset& data, std::size_t beta,
                                 const FitConfig& restricted_solver) {
  data.validate();
  const Index m = data.classes();
  const Index d = data.dims();
  const Index dm = m * d;
  if (dm > 12 || beta > 4) throw Error("l0_brute_force: enumeration guard (dm <= 12, beta <= 4)");
  const auto k_max = static_cast<Index>(std::min<std::size_t>(beta, static_cast<std::size_t>(dm)));

  L0Solution best;
  best.weights = WeightMatrix::zeros(m, d);
  best.objective = mlr_objective(best.weights, data);

  std::vector<Index> chosen;
  auto visit = [&](auto&& self, Index start, Index remaining) -> void {
    if (!chosen.empty()) {
      const FitResult fit = irls_fit(data, WeightMatrix::zeros(m, d), restricted_solver, chosen);
      const double obj = mlr_objective(fit.weights, data);
      if (obj < best.objective) {
        best.objective = obj;
        best.support = chosen;
        best.weights = fit.weights;
      }
    }
    if (remaining == 0) return;
    for (Index k = start; k < dm; ++k) {
      chosen.push_back(k);
      self(self, k + 1, remaining - 1);
      chosen.pop_back();
    }
  };
  visit(visit, 0, k_max);
  return best;
}

}  // namespace piano
