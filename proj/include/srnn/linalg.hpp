#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "srnn/error.hpp"
#include "srnn/rng.hpp"

namespace srnn {

using Vector = std::vector<double>;

// Dense row-major matrix. Loops below are deliberately plain: fixed
// summation order keeps results bit-reproducible, and the model sizes here
// (tens of rows) are far below where a BLAS would matter.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {
    require(rows > 0 && cols > 0, ErrorCode::invalid_argument,
            "matrix dimensions must be positive");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  Vector& data() noexcept { return data_; }
  const Vector& data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline bool all_finite(const Vector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data()); }

inline Vector matvec(const Matrix& m, const Vector& v) {
  require(m.cols() == v.size(), ErrorCode::dimension_mismatch,
          "matvec: matrix has " + std::to_string(m.cols()) + " cols, vector has " +
              std::to_string(v.size()) + " entries");
  Vector out(m.rows());
  const double* a = m.data().data();
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    const double* row = a + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * v[c];
    out[r] = s;
  }
  return out;
}

// acc += m^T v. Used by backprop; writing the transposed product in place
// avoids materializing transposes.
inline void matvec_transpose_add(const Matrix& m, const Vector& v, Vector& acc) {
  require(m.rows() == v.size(), ErrorCode::dimension_mismatch,
          "matvec_transpose_add: row count mismatch");
  require(m.cols() == acc.size(), ErrorCode::dimension_mismatch,
          "matvec_transpose_add: accumulator size mismatch");
  const double* a = m.data().data();
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double vr = v[r];
    const double* row = a + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc[c] += row[c] * vr;
  }
}

// acc += a b^T.
inline void add_outer(Matrix& acc, const Vector& a, const Vector& b) {
  require(acc.rows() == a.size() && acc.cols() == b.size(), ErrorCode::dimension_mismatch,
          "add_outer: shape mismatch");
  double* out = acc.data().data();
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = a[r];
    double* row = out + r * b.size();
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += ar * b[c];
  }
}

inline double dot(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), ErrorCode::dimension_mismatch, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), ErrorCode::dimension_mismatch,
          "squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

inline double cosine_similarity(const Vector& a, const Vector& b) {
  const double na = norm(a);
  const double nb = norm(b);
  require(na > 0.0 && nb > 0.0, ErrorCode::invalid_argument,
          "cosine_similarity: zero vector");
  return dot(a, b) / (na * nb);
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vector sigmoid(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid_scalar(v[i]);
  return out;
}

// Softmax with the max subtracted before exponentiation; never overflows and
// is invariant to adding a constant to every score.
inline Vector stable_softmax(const Vector& scores) {
  require(!scores.empty(), ErrorCode::invalid_argument, "stable_softmax: empty input");
  require(all_finite(scores), ErrorCode::numeric, "stable_softmax: non-finite score");
  const double mx = *std::max_element(scores.begin(), scores.end());
  Vector out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

// log softmax, used on likelihood paths so that tiny probabilities do not
// round to zero before the log.
inline Vector log_softmax(const Vector& scores) {
  require(!scores.empty(), ErrorCode::invalid_argument, "log_softmax: empty input");
  require(all_finite(scores), ErrorCode::numeric, "log_softmax: non-finite score");
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  const double lse = mx + std::log(sum);
  Vector out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - lse;
  return out;
}

inline double logsumexp(const Vector& terms) {
  require(!terms.empty(), ErrorCode::invalid_argument, "logsumexp: empty input");
  const double mx = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - mx);
  return mx + std::log(sum);
}

// Draw an index from an explicit probability vector. Probabilities must be
// nonnegative and sum to 1 within 1e-9.
inline std::size_t sample_categorical(const Vector& probs, RngStream& rng) {
  require(!probs.empty(), ErrorCode::invalid_argument, "sample_categorical: empty input");
  double total = 0.0;
  for (double p : probs) {
    require(std::isfinite(p) && p >= 0.0, ErrorCode::invalid_argument,
            "sample_categorical: negative or non-finite probability");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::invalid_argument,
          "sample_categorical: probabilities sum to " + std::to_string(total));
  const double u = rng.next_unit();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  // Rounding can leave cum fractionally below 1; the draw belongs to the
  // last nonzero cell.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

// Central-difference gradient, the reference every analytic gradient in this
// library is checked against.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                               const Vector& at, double eps) {
  require(eps > 0.0, ErrorCode::invalid_argument, "finite_diff_grad: eps must be positive");
  Vector grad(at.size());
  Vector point = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double up = f(point);
    point[i] = saved - eps;
    const double down = f(point);
    point[i] = saved;
    require(std::isfinite(up) && std::isfinite(down), ErrorCode::numeric,
            "finite_diff_grad: objective returned non-finite value");
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace srnn
