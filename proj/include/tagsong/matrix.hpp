#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "tagsong/errors.hpp"

namespace tagsong {

// Dense row-major matrix of doubles. Column vectors are n x 1 matrices.
// Public operations check their output for NaN/Inf and throw NumericError.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_) throw ShapeError("from_rows: ragged row lengths");
      std::size_t c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix colvec(const std::vector<double>& v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i];
  return m;
}

inline Matrix colvec(std::initializer_list<double> v) {
  return colvec(std::vector<double>(v));
}

inline void check_finite(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m[i])) {
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(r, k);
      if (av == 0.0) continue;
      for (std::size_t c = 0; c < b.cols(); ++c) out(r, c) += av * b(k, c);
    }
  }
  check_finite(out, "matmul");
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  check_finite(out, "add");
  return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  check_finite(out, "sub");
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  check_finite(out, "hadamard");
  return out;
}

inline Matrix scaled(const Matrix& a, double s) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  check_finite(out, "scaled");
  return out;
}

// a += s * b
inline void add_in_place(Matrix& a, const Matrix& b, double s = 1.0) {
  require_same_shape(a, b, "add_in_place");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

// dst += u v^T with u: m x 1, v: n x 1, dst: m x n
inline void add_outer(Matrix& dst, const Matrix& u, const Matrix& v) {
  if (dst.rows() != u.size() || dst.cols() != v.size()) {
    throw ShapeError("add_outer: destination shape mismatch");
  }
  for (std::size_t r = 0; r < dst.rows(); ++r) {
    const double uv = u[r];
    if (uv == 0.0) continue;
    for (std::size_t c = 0; c < dst.cols(); ++c) dst(r, c) += uv * v[c];
  }
}

// dst += W^T v with W: m x n, v: m x 1, dst: n x 1
inline void add_tmatvec(Matrix& dst, const Matrix& w, const Matrix& v) {
  if (dst.size() != w.cols() || v.size() != w.rows()) {
    throw ShapeError("add_tmatvec: shape mismatch");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double vv = v[r];
    if (vv == 0.0) continue;
    for (std::size_t c = 0; c < w.cols(); ++c) dst[c] += vv * w(r, c);
  }
}

inline double dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const Matrix& a) { return dot(a, a); }

inline double norm(const Matrix& a) { return std::sqrt(squared_norm(a)); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix sigmoid(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(out[i]);
  check_finite(out, "sigmoid");
  return out;
}

inline Matrix tanh(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  check_finite(out, "tanh");
  return out;
}

// Stacks two column vectors: (a; b).
inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.cols() != 1 || b.cols() != 1) throw ShapeError("vstack: expects column vectors");
  Matrix out(a.rows() + b.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = a[i];
  for (std::size_t i = 0; i < b.rows(); ++i) out[a.rows() + i] = b[i];
  return out;
}

// Rows [begin, end) of a column vector.
inline Matrix slice(const Matrix& a, std::size_t begin, std::size_t end) {
  if (a.cols() != 1 || begin > end || end > a.rows()) throw ShapeError("slice: bad range");
  Matrix out(end - begin, 1);
  for (std::size_t i = begin; i < end; ++i) out[i - begin] = a[i];
  return out;
}

}  // namespace tagsong
