#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dvs2s {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the model
// needs; shapes are kept as int64 so |V| * dim products never overflow.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s, double fill = 0.0);

  static Tensor vec(int64_t n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor mat(int64_t r, int64_t c, double fill = 0.0) { return Tensor({r, c}, fill); }
  static Tensor scalar(double v);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  double* row_ptr(int64_t r) { return data.data() + r * cols(); }
  const double* row_ptr(int64_t r) const { return data.data() + r * cols(); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  void fill(double v);
  bool all_finite() const;
};

Tensor zeros_like(const Tensor& t);

// Dot product with a fixed four-way accumulator grouping. Every matrix-vector
// path in the project funnels through this kernel so that results are
// reproducible across call sites.
inline double dot_kernel(const double* a, const double* b, int64_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

inline void axpy(double a, const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// y = W x, W is r x c, x has size c, y has size r.
void matvec(const Tensor& w, const double* x, double* y);
// y = W[:, lo:hi] x, x has size hi - lo.
void matvec_cols(const Tensor& w, int64_t lo, int64_t hi, const double* x, double* y);

void throw_shape_mismatch(const std::string& where);

}  // namespace dvs2s
