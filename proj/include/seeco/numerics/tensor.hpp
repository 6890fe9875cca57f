#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seeco/error.hpp"

namespace seeco {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major float64 array. The shape/data size invariant is enforced
/// by every constructor; `checked` additionally rejects NaN and Inf.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(shape_size(shape_) == data_.size(), ErrorCode::kShapeMismatch,
            "shape " + shape_string(shape_) + " does not hold " + std::to_string(data_.size()) +
                " values");
  }

  static Tensor checked(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    require(t.all_finite(), ErrorCode::kNonFiniteValue, "tensor contains NaN or Inf");
    return t;
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const {
    require(data_.size() == 1, ErrorCode::kShapeMismatch, "item() on non-scalar tensor");
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(), ErrorCode::kShapeMismatch,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Shape and every bit of every value agree.
inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  require(a.rank() == rank, ErrorCode::kShapeMismatch,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(a.shape()));
}

// ---------------------------------------------------------------------------
// Kernels. Reductions run in ascending index order so results are
// reproducible bit-for-bit.

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

inline void add_inplace(Tensor& acc, const Tensor& x) {
  require_same_shape(acc, x, "add_inplace");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

/// a[n x k] * b[k x m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  require(b.dim(0) == k, ErrorCode::kShapeMismatch,
          "matmul: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  Tensor out({n, m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += s * brow[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a);

/// a[n x k] * b[m x k]^T. Accumulates over k in ascending order like
/// matmul, so both routes give identical bits.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  require(b.dim(1) == a.dim(1), ErrorCode::kShapeMismatch,
          "matmul_nt: " + shape_string(a.shape()) + " * " + shape_string(b.shape()) + "^T");
  return matmul(a, transpose(b));
}

/// a[k x n]^T * b[k x m]
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  const std::size_t k = a.dim(0), n = a.dim(1), m = b.dim(1);
  require(b.dim(0) == k, ErrorCode::kShapeMismatch,
          "matmul_tn: " + shape_string(a.shape()) + "^T * " + shape_string(b.shape()));
  Tensor out({n, m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = pa[p * n + i];
      double* row = po + i * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += s * brow[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

/// Sum taken in ascending order, so any permutation of `v` gives the same
/// bits. Keeps softmax exactly permutation-equivariant.
inline double order_free_sum(std::span<const double> v, std::vector<double>& scratch) {
  scratch.assign(v.begin(), v.end());
  std::sort(scratch.begin(), scratch.end());
  double sum = 0.0;
  for (double x : scratch) sum += x;
  return sum;
}

/// Temperature softmax of a vector, max-subtracted.
inline Tensor softmax(const Tensor& v, double tau) {
  require(tau > 0.0, ErrorCode::kInvalidTemperature, "temperature must be positive");
  require(v.size() > 0, ErrorCode::kEmptyInput, "softmax of empty input");
  const double mx = *std::max_element(v.data().begin(), v.data().end());
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp((v[i] - mx) / tau);
  std::vector<double> scratch;
  const double sum = order_free_sum(out.data(), scratch);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] /= sum;
  return out;
}

/// Row-wise temperature softmax of a rank-2 tensor.
inline Tensor softmax_rows(const Tensor& x, double tau) {
  require_rank(x, 2, "softmax_rows");
  require(tau > 0.0, ErrorCode::kInvalidTemperature, "temperature must be positive");
  require(x.size() > 0, ErrorCode::kEmptyInput, "softmax of empty input");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Tensor out(x.shape());
  std::vector<double> scratch;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * m;
    double* o = out.data().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    for (std::size_t j = 0; j < m; ++j) o[j] = std::exp((row[j] - mx) / tau);
    const double sum = order_free_sum({o, m}, scratch);
    for (std::size_t j = 0; j < m; ++j) o[j] /= sum;
  }
  return out;
}

inline double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  require(a.size() > 0, ErrorCode::kEmptyInput, "mse of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // (a-b)^2 == (b-a)^2 exactly, so the result is symmetric bit-for-bit.
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Each row divided by its L2 norm.
inline Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = l2_norm(x.data().subspan(i * m, m));
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = x.at(i, j) / norm;
  }
  return out;
}

/// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace seeco
