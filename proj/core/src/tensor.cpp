#include "dvs2s/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace dvs2s {

Tensor::Tensor(std::vector<int64_t> s, double fill) : shape(std::move(s)) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: shape dimensions must be positive");
    n *= d;
  }
  data.assign(static_cast<size_t>(n), fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

void matvec(const Tensor& w, const double* x, double* y) {
  const int64_t r = w.rows(), c = w.cols();
  for (int64_t i = 0; i < r; ++i) y[i] = dot_kernel(w.row_ptr(i), x, c);
}

void matvec_cols(const Tensor& w, int64_t lo, int64_t hi, const double* x, double* y) {
  const int64_t r = w.rows();
  for (int64_t i = 0; i < r; ++i) y[i] = dot_kernel(w.row_ptr(i) + lo, x, hi - lo);
}

void throw_shape_mismatch(const std::string& where) {
  throw std::invalid_argument(where + ": shape mismatch");
}

}  // namespace dvs2s
