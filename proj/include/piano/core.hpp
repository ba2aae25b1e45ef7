#pragma once

// Domain types and the multinomial logistic regression objective shared by
// every solver in the library.
//
// Conventions:
//   * features are n x d, row j is x_j^T
//   * labels are one-hot n x m, row j is y_j^T
//   * weights are m x d, row i is w_i; the flat view stacks rows class-major
//     so that element (i, l) lives at index i * d + l

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace piano {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

/// Largest flattened weight count for which dense dm x dm matrices are built.
inline constexpr Index kDenseLimit = 5000;

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError("dimension mismatch: " + what);
}

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  Matrix features;  // n x d
  Matrix labels;    // n x m, one-hot
  std::vector<std::string> class_names;

  Index samples() const { return features.rows(); }
  Index dims() const { return features.cols(); }
  Index classes() const { return labels.cols(); }

  /// Compact class-index view of the one-hot labels.
  std::vector<int> class_indices() const {
    std::vector<int> out(static_cast<std::size_t>(samples()));
    for (Index j = 0; j < samples(); ++j) {
      Index k;
      labels.row(j).maxCoeff(&k);
      out[static_cast<std::size_t>(j)] = static_cast<int>(k);
    }
    return out;
  }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1)
      throw Error("dataset needs n >= 1 and d >= 1");
    if (labels.cols() < 2) throw Error("dataset needs m >= 2 classes");
    require_dims(labels.rows() == features.rows(), "label rows != feature rows");
    if (!features.allFinite()) throw Error("dataset features must be finite");
    for (Index j = 0; j < labels.rows(); ++j) {
      int ones = 0;
      for (Index i = 0; i < labels.cols(); ++i) {
        const double y = labels(j, i);
        if (y == 1.0) {
          ++ones;
        } else if (y != 0.0) {
          throw Error("label row " + std::to_string(j) + " is not one-hot");
        }
      }
      if (ones != 1) throw Error("label row " + std::to_string(j) + " is not one-hot");
    }
    if (!class_names.empty() && static_cast<Index>(class_names.size()) != labels.cols())
      throw Error("class_names size does not match label columns");
  }

  static Dataset from_classes(Matrix features, const std::vector<int>& classes, Index m,
                              std::vector<std::string> names = {}) {
    Dataset data;
    require_dims(static_cast<Index>(classes.size()) == features.rows(),
                 "class list length != feature rows");
    data.labels = Matrix::Zero(features.rows(), m);
    for (std::size_t j = 0; j < classes.size(); ++j) {
      if (classes[j] < 0 || classes[j] >= m)
        throw Error("class index out of range at row " + std::to_string(j));
      data.labels(static_cast<Index>(j), classes[j]) = 1.0;
    }
    data.features = std::move(features);
    data.class_names = std::move(names);
    data.validate();
    return data;
  }
};

// ---------------------------------------------------------------------------
// WeightMatrix

class WeightMatrix {
 public:
  WeightMatrix() = default;
  WeightMatrix(Index m, Index d) : w_(Matrix::Zero(m, d)) {}
  explicit WeightMatrix(Matrix w) : w_(std::move(w)) {}

  static WeightMatrix zeros(Index m, Index d) { return WeightMatrix(m, d); }

  /// Entries i.i.d. U[0, 1] from a seeded generator.
  static WeightMatrix uniform(Index m, Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix w(m, d);
    for (Index i = 0; i < m; ++i)
      for (Index l = 0; l < d; ++l) w(i, l) = unif(rng);
    return WeightMatrix(std::move(w));
  }

  static WeightMatrix unflatten(const Vector& flat, Index m, Index d) {
    require_dims(flat.size() == m * d, "flat weight length != m * d");
    Matrix w(m, d);
    for (Index i = 0; i < m; ++i)
      for (Index l = 0; l < d; ++l) w(i, l) = flat(i * d + l);
    return WeightMatrix(std::move(w));
  }

  Vector flatten() const {
    Vector flat(size());
    for (Index i = 0; i < classes(); ++i)
      for (Index l = 0; l < dims(); ++l) flat(i * dims() + l) = w_(i, l);
    return flat;
  }

  Index classes() const { return w_.rows(); }
  Index dims() const { return w_.cols(); }
  Index size() const { return w_.size(); }

  double operator()(Index i, Index l) const { return w_(i, l); }
  double& operator()(Index i, Index l) { return w_(i, l); }

  const Matrix& matrix() const { return w_; }
  Matrix& matrix() { return w_; }

  bool all_finite() const { return w_.allFinite(); }

  std::size_t nnz() const {
    std::size_t count = 0;
    for (Index k = 0; k < w_.size(); ++k)
      if (w_.data()[k] != 0.0) ++count;
    return count;
  }

  double l1_norm() const { return w_.cwiseAbs().sum(); }

  friend bool operator==(const WeightMatrix& a, const WeightMatrix& b) {
    return a.w_.rows() == b.w_.rows() && a.w_.cols() == b.w_.cols() && a.w_ == b.w_;
  }

 private:
  Matrix w_;
};

// ---------------------------------------------------------------------------
// Fit configuration and trace

enum class Regularization { none, l1, l0 };

/// How the l0 step ranks elements: by surrogate value at the minimizer
/// (ascending) or by surrogate decrease relative to zero (descending).
enum class L0Rank { value, gain };

struct FitConfig {
  Regularization reg = Regularization::none;
  double lambda = 0.0;
  std::size_t beta = 0;
  double rel_tol = 1e-3;
  int max_outer_iters = 1000;
  double bisection_tol = 1e-8;
  double bracket_growth = 2.0;
  double weight_cap = 1e3;
  int thread_count = 1;
  std::uint64_t seed = 0;
  L0Rank l0_rank = L0Rank::value;

  void validate(Index dm) const {
    if (!(rel_tol > 0.0)) throw Error("rel_tol must be positive");
    if (!(bisection_tol > 0.0)) throw Error("bisection_tol must be positive");
    if (!(bracket_growth > 1.0)) throw Error("bracket_growth must exceed 1");
    if (!(weight_cap > 0.0)) throw Error("weight_cap must be positive");
    if (max_outer_iters < 1) throw Error("max_outer_iters must be positive");
    if (thread_count < 1) throw Error("thread_count must be positive");
    if (reg == Regularization::l1 && !(lambda > 0.0))
      throw Error("l1 regularization needs lambda > 0");
    if (reg == Regularization::l0 && static_cast<Index>(beta) > dm)
      throw Error("l0 budget beta exceeds d * m");
  }
};

struct TraceRecord {
  int iter = 0;
  double objective = 0.0;
  double wall_ms = 0.0;
  std::size_t nnz = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct FitResult {
  WeightMatrix weights;
  std::vector<TraceRecord> trace;
  bool converged = false;
  bool stopped_early = false;  // an observer asked to stop

  int iterations() const { return trace.empty() ? 0 : trace.back().iter; }
  double final_objective() const {
    return trace.empty() ? std::numeric_limits<double>::quiet_NaN() : trace.back().objective;
  }
};

// ---------------------------------------------------------------------------
// Softmax machinery

template <typename Vec>
double log_sum_exp(const Vec& scores) {
  const double top = scores.maxCoeff();
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (Index i = 0; i < scores.size(); ++i) sum += std::exp(scores(i) - top);
  return top + std::log(sum);
}

template <typename Vec>
Vector softmax_posteriors(const Vec& scores) {
  const double top = scores.maxCoeff();
  Vector p(scores.size());
  double sum = 0.0;
  for (Index i = 0; i < scores.size(); ++i) {
    p(i) = std::exp(scores(i) - top);
    sum += p(i);
  }
  return p / sum;
}

/// Element i is w_i^T x.
template <typename Vec>
Vector class_scores(const WeightMatrix& W, const Vec& x) {
  require_dims(x.size() == W.dims(), "feature vector length != d");
  Vector s(W.classes());
  for (Index i = 0; i < W.classes(); ++i) {
    double acc = 0.0;
    for (Index l = 0; l < W.dims(); ++l) acc += W(i, l) * x(l);
    s(i) = acc;
  }
  return s;
}

/// n x m matrix of w_i^T x_j, accumulated in a fixed order.
inline Matrix score_matrix(const WeightMatrix& W, const Dataset& data) {
  require_dims(W.dims() == data.dims(), "weights d != data d");
  require_dims(W.classes() == data.classes(), "weights m != data m");
  return data.features * W.matrix().transpose();
}

inline void check_compatible(const WeightMatrix& W, const Dataset& data) {
  require_dims(W.dims() == data.dims(), "weights d != data d");
  require_dims(W.classes() == data.classes(), "weights m != data m");
}

/// Per-sample negative log-likelihood terms -log p_j(true class).
inline Vector sample_losses(const WeightMatrix& W, const Dataset& data) {
  check_compatible(W, data);
  const Matrix scores = score_matrix(W, data);
  Vector out(data.samples());
  for (Index j = 0; j < data.samples(); ++j) {
    out(j) = log_sum_exp(scores.row(j)) - scores.row(j).dot(data.labels.row(j));
  }
  return out;
}

inline double mlr_objective(const WeightMatrix& W, const Dataset& data) {
  const Vector losses = sample_losses(W, data);
  double total = 0.0;
  for (Index j = 0; j < losses.size(); ++j) total += losses(j);
  return total;
}

/// l1 adds lambda * ||w||_1; l0 is a constraint and adds nothing.
inline double penalized_objective(const WeightMatrix& W, const Dataset& data,
                                  const FitConfig& config) {
  const double base = mlr_objective(W, data);
  if (config.reg == Regularization::l1) return base + config.lambda * W.l1_norm();
  return base;
}

/// Block i (length d) is sum_j (p_j^(i) - y_ji) x_j.
inline Vector mlr_gradient(const WeightMatrix& W, const Dataset& data) {
  check_compatible(W, data);
  const Index d = data.dims();
  const Index m = data.classes();
  const Matrix scores = score_matrix(W, data);
  Matrix grad = Matrix::Zero(m, d);
  for (Index j = 0; j < data.samples(); ++j) {
    const Vector p = softmax_posteriors(scores.row(j));
    for (Index i = 0; i < m; ++i) {
      const double coef = p(i) - data.labels(j, i);
      if (coef != 0.0) grad.row(i) += coef * data.features.row(j);
    }
  }
  return WeightMatrix(std::move(grad)).flatten();
}

/// sum_j (P_j - p_j p_j^T) kron x_j x_j^T, laid out in the class-major order.
inline Matrix mlr_hessian(const WeightMatrix& W, const Dataset& data) {
  check_compatible(W, data);
  const Index d = data.dims();
  const Index m = data.classes();
  if (d * m > kDenseLimit) throw Error("Hessian size guard exceeded (d * m > 5000)");
  const Matrix scores = score_matrix(W, data);
  Matrix H = Matrix::Zero(d * m, d * m);
  for (Index j = 0; j < data.samples(); ++j) {
    const Vector p = softmax_posteriors(scores.row(j));
    const Vector x = data.features.row(j).transpose();
    const Matrix outer = x * x.transpose();
    for (Index i = 0; i < m; ++i) {
      for (Index k = 0; k < m; ++k) {
        const double c = (i == k ? p(i) : 0.0) - p(i) * p(k);
        H.block(i * d, k * d, d, d) += c * outer;
      }
    }
  }
  return H;
}

/// Relative change |cur - prev| / |prev|; two exact zeros count as no change.
inline double relative_change(double prev, double cur) {
  if (prev == 0.0) return cur == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(cur - prev) / std::abs(prev);
}

}  // namespace piano
