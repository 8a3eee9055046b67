#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace entdiff {

// All compute-core state is 64-bit floating point. Vectors are plain
// contiguous f64 buffers; matrices are row-major.
using DenseVector = std::vector<double>;

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major: entry (r, c) at data[r * cols + c]

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline void require_size(const DenseVector& v, std::size_t n, const char* what) {
  if (v.size() != n) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

// y = A x
inline DenseVector matvec(const DenseMatrix& a, const DenseVector& x) {
  require_size(x, a.cols, "matvec");
  DenseVector y(a.rows, 0.0);
  const double* p = a.data.data();
  for (std::size_t r = 0; r < a.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) acc += p[r * a.cols + c] * x[c];
    y[r] = acc;
  }
  return y;
}

// y = A^T x
inline DenseVector matvec_transposed(const DenseMatrix& a, const DenseVector& x) {
  require_size(x, a.rows, "matvec_transposed");
  DenseVector y(a.cols, 0.0);
  const double* p = a.data.data();
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double xr = x[r];
    for (std::size_t c = 0; c < a.cols; ++c) y[c] += p[r * a.cols + c] * xr;
  }
  return y;
}

// A += scale * u v^T
inline void add_outer(DenseMatrix& a, const DenseVector& u, const DenseVector& v,
                      double scale = 1.0) {
  require_size(u, a.rows, "add_outer");
  require_size(v, a.cols, "add_outer");
  double* p = a.data.data();
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double ur = scale * u[r];
    for (std::size_t c = 0; c < a.cols; ++c) p[r * a.cols + c] += ur * v[c];
  }
}

inline double dot(const DenseVector& a, const DenseVector& b) {
  require_size(b, a.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(const DenseVector& v) { return std::sqrt(dot(v, v)); }

// y += alpha * x
inline void axpy(double alpha, const DenseVector& x, DenseVector& y) {
  require_size(y, x.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale_in_place(DenseVector& v, double alpha) {
  for (double& x : v) x *= alpha;
}

inline DenseVector scaled(const DenseVector& v, double alpha) {
  DenseVector out(v);
  scale_in_place(out, alpha);
  return out;
}

// C = A B
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: dimension mismatch");
  DenseMatrix c(a.rows, b.cols, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double ark = a(r, k);
      for (std::size_t j = 0; j < b.cols; ++j) c(r, j) += ark * b(k, j);
    }
  return c;
}

inline DenseMatrix transposed(const DenseMatrix& a) {
  DenseMatrix t(a.cols, a.rows, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) t(c, r) = a(r, c);
  return t;
}

inline double trace(const DenseMatrix& a) {
  if (a.rows != a.cols) throw std::invalid_argument("trace: matrix must be square");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) acc += a(i, i);
  return acc;
}

// log sum_i exp(v_i), computed with max subtraction so large magnitudes
// neither overflow nor lose the dominant term.
inline double logsumexp(const DenseVector& v) {
  if (v.empty()) throw std::invalid_argument("logsumexp: empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

}  // namespace entdiff
