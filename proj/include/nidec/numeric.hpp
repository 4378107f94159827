#ifndef NIDEC_NUMERIC_HPP
#define NIDEC_NUMERIC_HPP

// Small dense linear algebra kit: row-major matrices, vector helpers,
// elementwise activations. Everything here is 64-bit.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "nidec/error.hpp"

namespace nidec {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

/// Non-owning row-major view over `rows*cols` contiguous values.
template <typename T>
class MatSpan {
 public:
  MatSpan() = default;
  MatSpan(T* data, std::size_t rows, std::size_t cols) : data_(data), rows_(rows), cols_(cols) {}
  // mutable -> const conversion
  template <typename U, typename = std::enable_if_t<std::is_const_v<T> && std::is_same_v<const U, T>>>
  MatSpan(const MatSpan<U>& other) : data_(other.data()), rows_(other.rows()), cols_(other.cols()) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  T* data() const { return data_; }
  T& operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  std::span<T> row(std::size_t r) const { return {data_ + r * cols_, cols_}; }
  std::span<T> flat() const { return {data_, rows_ * cols_}; }

 private:
  T* data_ = nullptr;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

using MatView = MatSpan<const double>;
using MatMut = MatSpan<double>;

/// Owning row-major matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  Vec& values() { return data_; }
  const Vec& values() const { return data_; }
  MatView view() const { return {data_.data(), rows_, cols_}; }
  MatMut mut() { return {data_.data(), rows_, cols_}; }
  operator MatView() const { return view(); }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

inline void require_shape(bool ok, std::string_view what) {
  if (!ok) throw ShapeError(std::string("shape mismatch: ") + std::string(what));
}

// ---------------------------------------------------------------------------
// BLAS-like kernels. The *_acc variants accumulate into their output.

/// y += A x
inline void gemv_acc(MatView a, ConstSpan x, MutSpan y) {
  require_shape(a.cols() == x.size() && a.rows() == y.size(), "gemv");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* row = a.data() + r * a.cols();
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

/// y += A^T x
inline void gemv_t_acc(MatView a, ConstSpan x, MutSpan y) {
  require_shape(a.rows() == x.size() && a.cols() == y.size(), "gemv_t");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row = a.data() + r * a.cols();
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += row[c] * xr;
  }
}

/// A += alpha * x y^T
inline void ger_acc(MatMut a, ConstSpan x, ConstSpan y, double alpha = 1.0) {
  require_shape(a.rows() == x.size() && a.cols() == y.size(), "ger");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double s = alpha * x[r];
    if (s == 0.0) continue;
    double* row = a.data() + r * a.cols();
    for (std::size_t c = 0; c < a.cols(); ++c) row[c] += s * y[c];
  }
}

/// C = A B (overwrites C). i-k-j order so the inner loop streams rows.
inline void gemm(MatView a, MatView b, MatMut c) {
  require_shape(a.cols() == b.rows() && c.rows() == a.rows() && c.cols() == b.cols(), "gemm");
  std::fill(c.data(), c.data() + c.size(), 0.0);
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

inline Vec matvec(MatView a, ConstSpan x) {
  Vec y(a.rows(), 0.0);
  gemv_acc(a, x, y);
  return y;
}

inline Vec hadamard(ConstSpan a, ConstSpan b) {
  require_shape(a.size() == b.size(), "hadamard");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Mat outer(ConstSpan x, ConstSpan y) {
  Mat m(x.size(), y.size());
  ger_acc(m.mut(), x, y);
  return m;
}

/// y += alpha * x
inline void axpy(double alpha, ConstSpan x, MutSpan y) {
  require_shape(x.size() == y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double dot(ConstSpan a, ConstSpan b) {
  require_shape(a.size() == b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double sum_squares(ConstSpan a) { return dot(a, a); }
inline double norm2(ConstSpan a) { return std::sqrt(sum_squares(a)); }

inline bool all_finite(ConstSpan a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline void fill_zero(MutSpan a) { std::fill(a.begin(), a.end(), 0.0); }

// ---------------------------------------------------------------------------
// Activations

enum class Activation { kTanh, kSigmoid, kRelu, kIdentity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double v) {
  // split form keeps exp() from overflowing for large |v|
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double ev = std::exp(v);
  return ev / (1.0 + ev);
}

inline double activate(Activation kind, double v) {
  switch (kind) {
    case Activation::kTanh: return std::tanh(v);
    case Activation::kSigmoid: return sigmoid(v);
    case Activation::kRelu: return v > 0.0 ? v : 0.0;
    case Activation::kIdentity: return v;
  }
  return v;
}

/// Derivative with respect to the pre-activation. relu'(0) = 0.
inline double activate_deriv(Activation kind, double pre) {
  switch (kind) {
    case Activation::kTanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::kSigmoid: {
      const double s = sigmoid(pre);
      return s * (1.0 - s);
    }
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

inline Vec activate(Activation kind, ConstSpan v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = activate(kind, v[i]);
  return out;
}

inline Vec activate_deriv(Activation kind, ConstSpan pre) {
  Vec out(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = activate_deriv(kind, pre[i]);
  return out;
}

}  // namespace nidec

#endif  // NIDEC_NUMERIC_HPP
